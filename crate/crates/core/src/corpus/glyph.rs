//! Procedural glyph families.
//!
//! Every glyph is defined as a membership test in a unit glyph space where
//! the shape fits inside the unit disc, so rotation never pushes it out of
//! the frame.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::raster::{Raster, Rect};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GlyphFamily {
    Ring,
    Cross,
    Bars,
    Triangle,
    Checker,
    Spiral,
    LMark,
    Diamond,
    DotGrid,
    Wedge,
    // Held out from every corpus; used only for out-of-domain occluders.
    Star,
    Hexagon,
    Arrow,
    Crescent,
    Zigzag,
}

impl GlyphFamily {
    /// Families available to corpus classes, in class-assignment order.
    pub const CORPUS: [GlyphFamily; 10] = [
        GlyphFamily::Ring,
        GlyphFamily::Cross,
        GlyphFamily::Bars,
        GlyphFamily::Triangle,
        GlyphFamily::Checker,
        GlyphFamily::Spiral,
        GlyphFamily::LMark,
        GlyphFamily::Diamond,
        GlyphFamily::DotGrid,
        GlyphFamily::Wedge,
    ];

    pub const OUT_OF_DOMAIN: [GlyphFamily; 5] = [
        GlyphFamily::Star,
        GlyphFamily::Hexagon,
        GlyphFamily::Arrow,
        GlyphFamily::Crescent,
        GlyphFamily::Zigzag,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GlyphFamily::Ring => "ring",
            GlyphFamily::Cross => "cross",
            GlyphFamily::Bars => "bars",
            GlyphFamily::Triangle => "triangle",
            GlyphFamily::Checker => "checker",
            GlyphFamily::Spiral => "spiral",
            GlyphFamily::LMark => "l-mark",
            GlyphFamily::Diamond => "diamond",
            GlyphFamily::DotGrid => "dot-grid",
            GlyphFamily::Wedge => "wedge",
            GlyphFamily::Star => "star",
            GlyphFamily::Hexagon => "hexagon",
            GlyphFamily::Arrow => "arrow",
            GlyphFamily::Crescent => "crescent",
            GlyphFamily::Zigzag => "zigzag",
        }
    }

    pub fn is_out_of_domain(self) -> bool {
        Self::OUT_OF_DOMAIN.contains(&self)
    }

    /// Membership of glyph-space point `(u, v)` with half stroke width `t`.
    fn contains(self, u: f64, v: f64, t: f64) -> bool {
        let r = (u * u + v * v).sqrt();
        match self {
            GlyphFamily::Ring => (r - 0.72).abs() <= t,
            GlyphFamily::Cross => {
                (u.abs() <= t && v.abs() <= 0.85) || (v.abs() <= t && u.abs() <= 0.85)
            }
            GlyphFamily::Bars => {
                u.abs() <= 0.7 && [-0.5, 0.0, 0.5].iter().any(|c| (v - c).abs() <= t)
            }
            GlyphFamily::Triangle => {
                let verts = [(0.0, -0.9), (-0.78, 0.45), (0.78, 0.45)];
                inside_convex(&verts, u, v)
            }
            GlyphFamily::Checker => {
                let half = 0.66;
                if u.abs() > half || v.abs() > half {
                    return false;
                }
                let cell = 2.0 * half / 3.0;
                let i = (((u + half) / cell).floor() as i64).min(2);
                let j = (((v + half) / cell).floor() as i64).min(2);
                (i + j) % 2 == 0
            }
            GlyphFamily::Spiral => {
                // Archimedean spiral r = b * phi over two turns.
                let b = 0.85 / (4.0 * PI);
                let phi = v.atan2(u).rem_euclid(2.0 * PI);
                (0..3).any(|k| {
                    let p = phi + 2.0 * PI * k as f64;
                    (0.6..=4.0 * PI).contains(&p) && (r - b * p).abs() <= t
                })
            }
            GlyphFamily::LMark => {
                ((u + 0.45).abs() <= t && (-0.8..=0.8).contains(&v))
                    || ((v - 0.8).abs() <= t && (-0.45..=0.6).contains(&u))
            }
            GlyphFamily::Diamond => (u.abs() + v.abs() - 0.78).abs() <= t * std::f64::consts::SQRT_2,
            GlyphFamily::DotGrid => {
                let rad = 0.11 + 0.5 * t;
                [-0.55, 0.0, 0.55].iter().any(|&cx| {
                    [-0.55, 0.0, 0.55]
                        .iter()
                        .any(|&cy| ((u - cx).powi(2) + (v - cy).powi(2)).sqrt() <= rad)
                })
            }
            GlyphFamily::Wedge => r <= 0.85 && v.atan2(u).abs() <= PI / 3.0 && u > -0.2,
            GlyphFamily::Star => {
                let phi = v.atan2(u);
                r <= 0.35 + 0.5 * (5.0 * phi).cos().max(0.0).powf(1.5)
            }
            GlyphFamily::Hexagon => {
                let axes = [0.0f64, PI / 3.0, 2.0 * PI / 3.0];
                axes.iter().all(|a| (u * a.cos() + v * a.sin()).abs() <= 0.72)
            }
            GlyphFamily::Arrow => {
                (v.abs() <= t && (-0.8..=0.3).contains(&u))
                    || ((0.3..=0.85).contains(&u) && v.abs() <= (0.85 - u) * 0.9)
            }
            GlyphFamily::Crescent => r <= 0.8 && ((u - 0.35).powi(2) + v * v).sqrt() > 0.6,
            GlyphFamily::Zigzag => {
                let x = (u + 0.8) * 2.5;
                let tri = (x - (x + 0.5).floor()).abs() * 2.0 - 0.5;
                u.abs() <= 0.8 && (v - 0.8 * tri).abs() <= t
            }
        }
    }
}

fn inside_convex(verts: &[(f64, f64)], u: f64, v: f64) -> bool {
    let mut sign = 0.0f64;
    for i in 0..verts.len() {
        let (ax, ay) = verts[i];
        let (bx, by) = verts[(i + 1) % verts.len()];
        let cross = (bx - ax) * (v - ay) - (by - ay) * (u - ax);
        if cross != 0.0 {
            if sign != 0.0 && cross.signum() != sign {
                return false;
            }
            sign = cross.signum();
        }
    }
    true
}

/// Jitter regimes that let classes beyond the family count share a shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JitterRegime {
    Standard,
    Thick,
    Dim,
}

impl JitterRegime {
    pub const ALL: [JitterRegime; 3] = [JitterRegime::Standard, JitterRegime::Thick, JitterRegime::Dim];

    fn suffix(self) -> &'static str {
        match self {
            JitterRegime::Standard => "",
            JitterRegime::Thick => "-thick",
            JitterRegime::Dim => "-dim",
        }
    }

    fn stroke_px(self) -> (f64, f64) {
        match self {
            JitterRegime::Thick => (5.0, 7.0),
            _ => (2.0, 4.5),
        }
    }

    fn foreground(self) -> (f64, f64) {
        match self {
            JitterRegime::Dim => (0.35, 0.55),
            _ => (0.7, 1.0),
        }
    }
}

/// Family and regime for corpus class `k`.
pub fn class_style(k: usize) -> Option<(GlyphFamily, JitterRegime)> {
    let fams = GlyphFamily::CORPUS.len();
    let regime = *JitterRegime::ALL.get(k / fams)?;
    Some((GlyphFamily::CORPUS[k % fams], regime))
}

pub fn max_corpus_classes() -> usize {
    GlyphFamily::CORPUS.len() * JitterRegime::ALL.len()
}

pub fn class_name(k: usize) -> Option<String> {
    class_style(k).map(|(f, r)| format!("{}{}", f.name(), r.suffix()))
}

/// Per-sample rendering parameters.
#[derive(Debug, Clone, Copy)]
pub struct GlyphParams {
    pub family: GlyphFamily,
    pub rotation: f64,
    pub scale: f64,
    pub stroke_px: f64,
    pub foreground: f64,
}

impl GlyphParams {
    pub fn sample(family: GlyphFamily, regime: JitterRegime, rng: &mut SplitMix64) -> Self {
        let (s0, s1) = regime.stroke_px();
        let (f0, f1) = regime.foreground();
        Self {
            family,
            rotation: rng.uniform(-30.0, 30.0).to_radians(),
            scale: rng.uniform(0.6, 0.95),
            stroke_px: rng.uniform(s0, s1),
            foreground: rng.uniform(f0, f1),
        }
    }
}

/// Rendered glyph: intensities in `[0, 1]` plus the foreground mask.
pub struct RenderedGlyph {
    pub size: u32,
    pub mask: Vec<bool>,
}

pub fn render_mask(params: &GlyphParams, size: u32) -> RenderedGlyph {
    let half = size as f64 / 2.0;
    let radius = params.scale * half;
    let t = 0.5 * params.stroke_px / radius;
    let (sin, cos) = params.rotation.sin_cos();
    let mut mask = Vec::with_capacity(size as usize * size as usize);
    for py in 0..size {
        for px in 0..size {
            let dx = (px as f64 + 0.5 - half) / radius;
            let dy = (py as f64 + 0.5 - half) / radius;
            let u = dx * cos + dy * sin;
            let v = -dx * sin + dy * cos;
            mask.push(params.family.contains(u, v, t));
        }
    }
    RenderedGlyph { size, mask }
}

/// Tightest rectangle around the mask, grown by `margin` and clipped.
pub fn mask_bbox(mask: &[bool], width: u32, height: u32, margin: u32) -> Option<Rect> {
    let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        let (x, y) = (i as u32 % width, i as u32 / width);
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    if x0 == u32::MAX {
        return None;
    }
    let x0 = x0.saturating_sub(margin);
    let y0 = y0.saturating_sub(margin);
    let x1 = (x1 + margin).min(width - 1);
    let y1 = (y1 + margin).min(height - 1);
    Some(Rect::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1))
}

/// Corpus-style sample: glyph over uniform `[0, 0.1]` background noise.
pub fn render_sample(params: &GlyphParams, size: u32, rng: &mut SplitMix64) -> (Raster, Rect) {
    let glyph = render_mask(params, size);
    let gray: Vec<u8> = glyph
        .mask
        .iter()
        .map(|&m| {
            let fg = if m { params.foreground } else { 0.0 };
            let v = (fg + rng.uniform(0.0, 0.1)).min(1.0);
            (v * 255.0).round() as u8
        })
        .collect();
    // A glyph always has foreground pixels at these scales; fall back to the
    // whole frame rather than panic if a degenerate draw ever produces none.
    let bbox = mask_bbox(&glyph.mask, size, size, 2).unwrap_or(Rect::new(0, 0, size, size));
    let raster = Raster::from_gray(size, size, &gray).expect("square gray buffer");
    (raster, bbox)
}

/// Occluder-style rendering: glyph on pure black, cropped to its tight box.
pub fn render_cutout(params: &GlyphParams, size: u32) -> Raster {
    let glyph = render_mask(params, size);
    let level = (params.foreground * 255.0).round().max(16.0) as u8;
    let gray: Vec<u8> = glyph.mask.iter().map(|&m| if m { level } else { 0 }).collect();
    let full = Raster::from_gray(size, size, &gray).expect("square gray buffer");
    match mask_bbox(&glyph.mask, size, size, 0) {
        Some(b) => full.crop(b).expect("mask bbox inside frame"),
        None => full,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_family_renders_foreground() {
        let all = GlyphFamily::CORPUS.iter().chain(GlyphFamily::OUT_OF_DOMAIN.iter());
        for &family in all {
            for seed in 0..20 {
                let mut rng = SplitMix64::new(seed);
                let p = GlyphParams::sample(family, JitterRegime::Standard, &mut rng);
                let g = render_mask(&p, 64);
                let n = g.mask.iter().filter(|&&m| m).count();
                assert!(n > 40, "{family:?} seed {seed}: only {n} px");
                assert!(n < 64 * 64 * 3 / 4, "{family:?} seed {seed}: {n} px");
            }
        }
    }

    #[test]
    fn class_styles_cycle_through_regimes() {
        assert_eq!(class_name(0).unwrap(), "ring");
        assert_eq!(class_name(10).unwrap(), "ring-thick");
        assert_eq!(class_name(29).unwrap(), "wedge-dim");
        assert!(class_style(30).is_none());
    }

    #[test]
    fn families_are_disjoint() {
        for f in GlyphFamily::OUT_OF_DOMAIN {
            assert!(!GlyphFamily::CORPUS.contains(&f));
            assert!(f.is_out_of_domain());
        }
    }

    #[test]
    fn cutout_is_tight() {
        let mut rng = SplitMix64::new(1);
        let p = GlyphParams::sample(GlyphFamily::Star, JitterRegime::Standard, &mut rng);
        let r = render_cutout(&p, 64);
        let g = r.gray_u8();
        let (w, h) = (r.width() as usize, r.height() as usize);
        assert!((0..w).any(|x| g[x] > 0));
        assert!((0..w).any(|x| g[(h - 1) * w + x] > 0));
        assert!((0..h).any(|y| g[y * w] > 0));
        assert!((0..h).any(|y| g[y * w + w - 1] > 0));
    }
}
