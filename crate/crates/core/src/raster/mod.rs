//! Rasters and compositing primitives.
//!
//! Images are 3-channel, 8-bit, row-major. Grayscale content is stored with
//! equal channels so every stage of the pipeline sees one layout.

mod pnm;

pub use pnm::{read_pnm, read_pnm_file, write_pgm, write_pnm, write_pnm_file};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CHANNELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Color {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl Color {
    pub const BLACK: Color = Color { r: 0, g: 0, b: 0 };

    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Self { r, g, b }
    }

    pub const fn gray(v: u8) -> Self {
        Self { r: v, g: v, b: v }
    }

    pub fn to_array(self) -> [u8; 3] {
        [self.r, self.g, self.b]
    }
}

/// Axis-aligned rectangle in integer pixels, origin top-left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub const fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn right(&self) -> u32 {
        self.x + self.w
    }

    pub fn bottom(&self) -> u32 {
        self.y + self.h
    }

    pub fn fits_in(&self, width: u32, height: u32) -> bool {
        self.right() <= width && self.bottom() <= height
    }

    /// True when `other` lies entirely inside `self`.
    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && x < self.right() && y >= self.y && y < self.bottom()
    }

    pub fn to_array(self) -> [u32; 4] {
        [self.x, self.y, self.w, self.h]
    }

    pub fn from_array(a: [u32; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }
}

// Serialized as `[x, y, w, h]` to match the manifest rows.
impl Serialize for Rect {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Rect {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        <[u32; 4]>::deserialize(d).map(Rect::from_array)
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Raster {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl std::fmt::Debug for Raster {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Raster")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl Raster {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape(format!("raster dimensions must be positive, got {width}x{height}")));
        }
        let expected = width as usize * height as usize * CHANNELS;
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "raster {width}x{height} needs {expected} bytes, got {}",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: u32, height: u32, color: Color) -> Self {
        assert!(width > 0 && height > 0, "raster dimensions must be positive");
        let data = color
            .to_array()
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * CHANNELS)
            .collect();
        Self { width, height, data }
    }

    /// Builds a 3-channel raster from one gray value per pixel.
    pub fn from_gray(width: u32, height: u32, gray: &[u8]) -> Result<Self> {
        if gray.len() != width as usize * height as usize {
            return Err(Error::Shape(format!(
                "gray buffer of {} for {width}x{height}",
                gray.len()
            )));
        }
        let data = gray.iter().flat_map(|&v| [v, v, v]).collect();
        Self::new(width, height, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn frame(&self) -> Rect {
        Rect::new(0, 0, self.width, self.height)
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * CHANNELS
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let o = self.offset(x, y);
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, px: [u8; 3]) {
        let o = self.offset(x, y);
        self.data[o..o + 3].copy_from_slice(&px);
    }

    /// Copy of the sub-rectangle `rect`, which must lie inside the frame.
    pub fn crop(&self, rect: Rect) -> Result<Raster> {
        if rect.w == 0 || rect.h == 0 || !rect.fits_in(self.width, self.height) {
            return Err(Error::Size(format!(
                "crop {:?} outside {}x{} raster",
                rect, self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(rect.area() as usize * CHANNELS);
        for y in rect.y..rect.bottom() {
            let start = self.offset(rect.x, y);
            data.extend_from_slice(&self.data[start..start + rect.w as usize * CHANNELS]);
        }
        Raster::new(rect.w, rect.h, data)
    }

    /// Per-pixel channel mean scaled to `[0, 1]`.
    pub fn gray_f64(&self) -> Vec<f64> {
        self.data
            .chunks_exact(CHANNELS)
            .map(|p| (p[0] as f64 + p[1] as f64 + p[2] as f64) / (3.0 * 255.0))
            .collect()
    }

    /// Per-pixel channel mean rounded to 8 bits.
    pub fn gray_u8(&self) -> Vec<u8> {
        self.data
            .chunks_exact(CHANNELS)
            .map(|p| ((p[0] as u32 + p[1] as u32 + p[2] as u32 + 1) / 3) as u8)
            .collect()
    }
}

/// How occluder pixels are treated when pasted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransparencyRule {
    Opaque,
    /// Pixels whose channels are all `<= threshold` are skipped.
    KeyColor(u8),
}

impl Default for TransparencyRule {
    fn default() -> Self {
        TransparencyRule::KeyColor(2)
    }
}

impl TransparencyRule {
    #[inline]
    pub fn is_transparent(&self, px: &[u8]) -> bool {
        match *self {
            TransparencyRule::Opaque => false,
            TransparencyRule::KeyColor(t) => px.iter().all(|&c| c <= t),
        }
    }
}

/// What an overlay actually touched.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlayStats {
    /// Pixels overwritten with occluder content.
    pub written: u64,
    /// Occluder pixels that fell outside the base raster.
    pub clipped_fraction: f64,
}

/// Bilinear resampling with half-pixel centers.
///
/// Source coordinate of output pixel `d` is `(d + 0.5) * src / dst - 0.5`,
/// clamped to the valid range; the result is rounded to nearest.
pub fn resample(src: &Raster, out_w: u32, out_h: u32) -> Result<Raster> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::Size(format!("resample target {out_w}x{out_h}")));
    }
    if out_w == src.width && out_h == src.height {
        return Ok(src.clone());
    }
    let xs = axis_weights(src.width, out_w);
    let ys = axis_weights(src.height, out_h);
    let mut data = Vec::with_capacity(out_w as usize * out_h as usize * CHANNELS);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let p00 = src.offset(x0, y0);
            let p10 = src.offset(x1, y0);
            let p01 = src.offset(x0, y1);
            let p11 = src.offset(x1, y1);
            for c in 0..CHANNELS {
                let a = src.data[p00 + c] as f64;
                let b = src.data[p10 + c] as f64;
                let top = a + (b - a) * fx;
                let a = src.data[p01 + c] as f64;
                let b = src.data[p11 + c] as f64;
                let bottom = a + (b - a) * fx;
                let v = top + (bottom - top) * fy;
                data.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Raster::new(out_w, out_h, data)
}

/// Same sampling as [`resample`], on a single-channel f64 plane.
pub fn resample_plane(src: &[f64], w: u32, h: u32, out_w: u32, out_h: u32) -> Vec<f64> {
    debug_assert_eq!(src.len(), w as usize * h as usize);
    if w == out_w && h == out_h {
        return src.to_vec();
    }
    let xs = axis_weights(w, out_w);
    let ys = axis_weights(h, out_h);
    let w = w as usize;
    let mut out = Vec::with_capacity(out_w as usize * out_h as usize);
    for &(y0, y1, fy) in &ys {
        let (r0, r1) = (y0 as usize * w, y1 as usize * w);
        for &(x0, x1, fx) in &xs {
            let (x0, x1) = (x0 as usize, x1 as usize);
            let top = src[r0 + x0] + (src[r0 + x1] - src[r0 + x0]) * fx;
            let bottom = src[r1 + x0] + (src[r1 + x1] - src[r1 + x0]) * fx;
            out.push(top + (bottom - top) * fy);
        }
    }
    out
}

fn axis_weights(src: u32, dst: u32) -> Vec<(u32, u32, f64)> {
    let scale = src as f64 / dst as f64;
    let max = (src - 1) as f64;
    (0..dst)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, max);
            let i0 = s.floor() as u32;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

/// Pastes `occluder` with its top-left at `(x, y)`, clipping to the base.
pub fn overlay_in_place(
    base: &mut Raster,
    occluder: &Raster,
    x: i64,
    y: i64,
    rule: TransparencyRule,
) -> OverlayStats {
    let mut written = 0u64;
    let mut inside = 0u64;
    for oy in 0..occluder.height {
        let by = y + oy as i64;
        if by < 0 || by >= base.height as i64 {
            continue;
        }
        for ox in 0..occluder.width {
            let bx = x + ox as i64;
            if bx < 0 || bx >= base.width as i64 {
                continue;
            }
            inside += 1;
            let so = occluder.offset(ox, oy);
            let px = &occluder.data[so..so + CHANNELS];
            if rule.is_transparent(px) {
                continue;
            }
            let d = base.offset(bx as u32, by as u32);
            base.data[d..d + CHANNELS].copy_from_slice(px);
            written += 1;
        }
    }
    let total = occluder.width as u64 * occluder.height as u64;
    OverlayStats {
        written,
        clipped_fraction: (total - inside) as f64 / total as f64,
    }
}

pub fn overlay(
    base: &Raster,
    occluder: &Raster,
    x: i64,
    y: i64,
    rule: TransparencyRule,
) -> (Raster, OverlayStats) {
    let mut out = base.clone();
    let stats = overlay_in_place(&mut out, occluder, x, y, rule);
    (out, stats)
}

/// Fills `rect` (clipped to the frame) and returns the number of pixels set.
pub fn fill_rect_in_place(base: &mut Raster, rect: Rect, color: Color) -> u64 {
    let x1 = rect.right().min(base.width);
    let y1 = rect.bottom().min(base.height);
    let px = color.to_array();
    let mut n = 0;
    for y in rect.y.min(y1)..y1 {
        for x in rect.x.min(x1)..x1 {
            let o = base.offset(x, y);
            base.data[o..o + CHANNELS].copy_from_slice(&px);
            n += 1;
        }
    }
    n
}

pub fn fill_rect(base: &Raster, rect: Rect, color: Color) -> Raster {
    let mut out = base.clone();
    fill_rect_in_place(&mut out, rect, color);
    out
}

/// Per-channel mean over every pixel of every raster, rounded half-up.
pub fn mean_color<'a>(rasters: impl IntoIterator<Item = &'a Raster>) -> Result<Color> {
    let mut sums = [0u64; 3];
    let mut count = 0u64;
    for r in rasters {
        for p in r.data.chunks_exact(CHANNELS) {
            sums[0] += p[0] as u64;
            sums[1] += p[1] as u64;
            sums[2] += p[2] as u64;
        }
        count += r.width as u64 * r.height as u64;
    }
    if count == 0 {
        return Err(Error::EmptyInput("mean color of an empty split".into()));
    }
    // floor(sum / count + 1/2) in exact integer arithmetic.
    let round = |s: u64| ((2 * s + count) / (2 * count)) as u8;
    Ok(Color::new(round(sums[0]), round(sums[1]), round(sums[2])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn checker(w: u32, h: u32) -> Raster {
        let mut data = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let v = ((x * 37 + y * 91) % 251) as u8;
                data.extend_from_slice(&[v, v.wrapping_add(3), v / 2]);
            }
        }
        Raster::new(w, h, data).unwrap()
    }

    #[test]
    fn rejects_bad_buffer_length() {
        assert!(matches!(Raster::new(2, 2, vec![0; 11]), Err(Error::Shape(_))));
        assert!(Raster::new(0, 2, vec![]).is_err());
    }

    #[test]
    fn resample_identity() {
        let r = checker(7, 5);
        assert_eq!(resample(&r, 7, 5).unwrap(), r);
    }

    #[test]
    fn resample_constant_any_size() {
        let r = Raster::filled(5, 3, Color::new(17, 200, 99));
        for (w, h) in [(1, 1), (13, 2), (64, 64), (3, 40)] {
            let out = resample(&r, w, h).unwrap();
            assert_eq!(out, Raster::filled(w, h, Color::new(17, 200, 99)));
        }
    }

    #[test]
    fn resample_two_pixel_ramp() {
        // Centers of the 4 outputs map to source x = -0.25, 0.25, 0.75, 1.25,
        // clamped to [0, 1]: weights 0, 0.25, 0.75, 1 on the white pixel.
        let r = Raster::new(2, 1, vec![0, 0, 0, 255, 255, 255]).unwrap();
        let out = resample(&r, 4, 1).unwrap();
        let vals: Vec<u8> = (0..4).map(|x| out.pixel(x, 0)[0]).collect();
        assert_eq!(vals, vec![0, 64, 191, 255]);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn resample_zero_target_rejected() {
        assert!(resample(&checker(3, 3), 0, 4).is_err());
    }

    #[test]
    fn overlay_all_black_with_key_is_noop() {
        let base = checker(6, 6);
        let occ = Raster::filled(4, 4, Color::BLACK);
        let (out, stats) = overlay(&base, &occ, 1, 1, TransparencyRule::KeyColor(2));
        assert_eq!(out, base);
        assert_eq!(stats.written, 0);
    }

    #[test]
    fn overlay_full_cover_replaces() {
        let base = checker(5, 4);
        let occ = checker(5, 4).crop(Rect::new(0, 0, 5, 4)).unwrap();
        let occ = fill_rect(&occ, occ.frame(), Color::new(9, 8, 7));
        let (out, stats) = overlay(&base, &occ, 0, 0, TransparencyRule::Opaque);
        assert_eq!(out, occ);
        assert_eq!(stats.written, 20);
        assert_eq!(stats.clipped_fraction, 0.0);
    }

    #[test]
    fn overlay_patch_changes_exactly_its_footprint() {
        let base = Raster::filled(4, 4, Color::gray(10));
        let occ = Raster::filled(2, 2, Color::gray(200));
        let (out, _) = overlay(&base, &occ, 1, 1, TransparencyRule::Opaque);
        let diff = (0..4)
            .flat_map(|y| (0..4).map(move |x| (x, y)))
            .filter(|&(x, y)| out.pixel(x, y) != base.pixel(x, y))
            .count();
        assert_eq!(diff, 4);
    }

    #[test]
    fn overlay_clipping_is_reported() {
        let base = Raster::filled(4, 4, Color::gray(10));
        let occ = Raster::filled(2, 2, Color::gray(200));
        let (_, stats) = overlay(&base, &occ, -1, 3, TransparencyRule::Opaque);
        assert_eq!(stats.written, 1);
        assert!((stats.clipped_fraction - 0.75).abs() < 1e-12);
    }

    #[test]
    fn fill_rect_cases() {
        let base = checker(4, 4);
        assert_eq!(fill_rect(&base, Rect::new(1, 1, 0, 3), Color::gray(1)), base);
        assert_eq!(
            fill_rect(&base, base.frame(), Color::gray(77)),
            Raster::filled(4, 4, Color::gray(77))
        );
        let out = fill_rect(&base, Rect::new(1, 1, 2, 2), Color::new(1, 2, 3));
        let (mut colored, mut same) = (0, 0);
        for y in 0..4 {
            for x in 0..4 {
                if out.pixel(x, y) == [1, 2, 3] {
                    colored += 1;
                } else if out.pixel(x, y) == base.pixel(x, y) {
                    same += 1;
                }
            }
        }
        assert_eq!((colored, same), (4, 12));
        // Clipped at the frame edge.
        assert_eq!(fill_rect_in_place(&mut base.clone(), Rect::new(3, 3, 5, 5), Color::BLACK), 1);
    }

    #[test]
    fn mean_color_cases() {
        let gray = Raster::filled(3, 3, Color::gray(128));
        assert_eq!(mean_color([&gray]).unwrap(), Color::gray(128));
        let black = Raster::filled(4, 2, Color::BLACK);
        let white = Raster::filled(4, 2, Color::gray(255));
        assert_eq!(mean_color([&black, &white]).unwrap(), Color::gray(128));
        assert!(matches!(mean_color(std::iter::empty()), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn crop_matches_direct_indexing() {
        let r = checker(40, 40);
        let c = r.crop(Rect::new(10, 5, 20, 30)).unwrap();
        assert_eq!((c.width(), c.height()), (20, 30));
        for y in 0..30 {
            for x in 0..20 {
                assert_eq!(c.pixel(x, y), r.pixel(x + 10, y + 5));
            }
        }
        assert!(r.crop(Rect::new(30, 0, 20, 5)).is_err());
    }

    fn raster_strategy() -> impl Strategy<Value = Raster> {
        (1u32..12, 1u32..12).prop_flat_map(|(w, h)| {
            proptest::collection::vec(any::<u8>(), (w * h * 3) as usize)
                .prop_map(move |d| Raster::new(w, h, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn resample_stays_within_channel_bounds(r in raster_strategy(), w in 1u32..20, h in 1u32..20) {
            let out = resample(&r, w, h).unwrap();
            for c in 0..3 {
                let src = r.data().iter().skip(c).step_by(3);
                let (lo, hi) = src.fold((255u8, 0u8), |(lo, hi), &v| (lo.min(v), hi.max(v)));
                for &v in out.data().iter().skip(c).step_by(3) {
                    prop_assert!(v >= lo && v <= hi);
                }
            }
        }

        #[test]
        fn footprint_complement_untouched(
            r in raster_strategy(), x in -4i64..14, y in -4i64..14, ow in 1u32..6, oh in 1u32..6, v in 0u8..255
        ) {
            let occ = Raster::filled(ow, oh, Color::gray(v));
            let (out, _) = overlay(&r, &occ, x, y, TransparencyRule::KeyColor(2));
            let filled = fill_rect(&r, Rect::new(x.max(0) as u32, y.max(0) as u32, ow, oh), Color::gray(v));
            for py in 0..r.height() {
                for px in 0..r.width() {
                    let inside = (px as i64) >= x && (px as i64) < x + ow as i64
                        && (py as i64) >= y && (py as i64) < y + oh as i64;
                    if !inside {
                        prop_assert_eq!(out.pixel(px, py), r.pixel(px, py));
                    }
                    let rect = Rect::new(x.max(0) as u32, y.max(0) as u32, ow, oh);
                    if !rect.contains(px, py) {
                        prop_assert_eq!(filled.pixel(px, py), r.pixel(px, py));
                    }
                }
            }
        }
    }
}
