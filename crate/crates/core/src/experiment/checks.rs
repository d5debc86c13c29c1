//! Self-contained property checks reported by the reproduction run.
//!
//! Each check compares the library against a direct re-derivation rather
//! than reusing the code path under test.

use serde::{Deserialize, Serialize};

use crate::analysis::{separability, FeatureSet};
use crate::corpus::LabeledSample;
use crate::imagination::OccluderBank;
use crate::netcore::{grad_check, Activation, ModelSpec};
use crate::occlusion::{compose, solve_object, ComposeOptions, OcclusionSpec, OcclusionType};
use crate::raster::{read_pnm, write_pnm, Color, Raster, Rect};
use crate::rng::{derive_seed, purpose, SplitMix64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub pass: bool,
    pub cases: usize,
    pub worst: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// `(d_inter, d_intra)` by two explicit passes over plain vectors.
pub fn direct_separability(vectors: &[Vec<f64>], labels: &[usize]) -> (f64, f64) {
    let width = vectors[0].len();
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut global = vec![0.0; width];
    for v in vectors {
        for d in 0..width {
            global[d] += v[d];
        }
    }
    global.iter_mut().for_each(|g| *g /= vectors.len() as f64);
    let (mut inter, mut intra) = (0.0, 0.0);
    for &c in &classes {
        let members: Vec<&Vec<f64>> = vectors.iter().zip(labels).filter(|(_, &l)| l == c).map(|(v, _)| v).collect();
        let mut mu = vec![0.0; width];
        for v in &members {
            for d in 0..width {
                mu[d] += v[d];
            }
        }
        mu.iter_mut().for_each(|m| *m /= members.len() as f64);
        inter += (0..width).map(|d| (mu[d] - global[d]).powi(2)).sum::<f64>();
        let spread: f64 = members
            .iter()
            .map(|v| (0..width).map(|d| (v[d] - mu[d]).powi(2)).sum::<f64>())
            .sum();
        intra += spread / members.len() as f64;
    }
    let s = classes.len() as f64;
    (inter / s, intra / s)
}

fn rel(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Random feature sets against [`direct_separability`].
pub fn separability_oracle(seed: u64, sets: usize) -> CheckOutcome {
    let mut worst = 0.0f64;
    let mut failures = 0;
    for k in 0..sets {
        let mut rng = SplitMix64::derived(seed, k as u64, purpose::VERIFY);
        let classes = rng.range_inclusive(2, 10) as usize;
        let width = rng.range_inclusive(2, 32) as usize;
        let offset = rng.uniform(-50.0, 50.0);
        let mut vectors = Vec::new();
        let mut labels = Vec::new();
        for c in 0..classes {
            let n = rng.range_inclusive(2, 50) as usize;
            let center: Vec<f64> = (0..width).map(|_| rng.uniform(-5.0, 5.0) + offset).collect();
            for _ in 0..n {
                vectors.push(center.iter().map(|m| m + rng.normal()).collect::<Vec<f64>>());
                labels.push(c);
            }
        }
        let (inter, intra) = direct_separability(&vectors, &labels);
        let flat: Vec<f64> = vectors.concat();
        match FeatureSet::new(width, &flat, &labels).and_then(|fs| separability(&fs)) {
            Ok(r) => {
                let e = rel(r.d_inter, inter).max(rel(r.d_intra, intra)).max(rel(r.j, inter / intra));
                worst = worst.max(e);
                if e >= 1e-10 {
                    failures += 1;
                }
            }
            Err(_) => failures += 1,
        }
    }
    CheckOutcome {
        pass: failures == 0,
        cases: sets,
        worst,
        note: None,
    }
}

/// Finite-difference checks on random toy networks.
pub fn gradient_models(seed: u64, models: usize) -> CheckOutcome {
    let mut worst = 0.0f64;
    let mut pass = true;
    for k in 0..models {
        let mut rng = SplitMix64::derived(seed, k as u64, purpose::GRAD_CHECK);
        let depth = rng.range_inclusive(1, 3) as usize;
        let widths: Vec<usize> = (0..=depth).map(|_| rng.range_inclusive(2, 16) as usize).collect();
        let mut spec = ModelSpec::classifier(widths);
        if rng.below(4) == 0 {
            spec.activations = vec![Activation::Identity; depth];
        }
        match grad_check(&spec, 20, 1e-4, derive_seed(seed, k as u64, purpose::GRAD_CHECK)) {
            Ok(r) => {
                worst = worst.max(r.max_rel_error);
                pass &= r.pass;
            }
            Err(_) => pass = false,
        }
    }
    CheckOutcome {
        pass,
        cases: models,
        worst,
        note: None,
    }
}

/// Gray-rectangle area fidelity, untouched pixels outside the footprint,
/// and object occluders that always fit.
pub fn compositor_geometry(seed: u64, draws: usize) -> CheckOutcome {
    let gray = Color::gray(128);
    let bank = OccluderBank::default();
    let mut worst = 0.0f64;
    let mut failures = 0;
    for k in 0..draws {
        let mut rng = SplitMix64::derived(seed, k as u64, purpose::VERIFY);
        let bw = rng.range_inclusive(32, 96) as u32;
        let bh = rng.range_inclusive(32, 96) as u32;
        let (mx, my) = (rng.range_inclusive(0, 12) as u32, rng.range_inclusive(0, 12) as u32);
        let (w, h) = (bw + mx + rng.below(8) as u32, bh + my + rng.below(8) as u32);
        let level = rng.range_inclusive(0, 100) as u32;
        // Base pixels avoid the fill value so every painted pixel is visible.
        let data: Vec<u8> = (0..w * h * 3).map(|_| rng.below(120) as u8).collect();
        let sample = LabeledSample {
            id: format!("geom{k}"),
            raster: Raster::new(w, h, data).expect("sized"),
            class_id: 0,
            bboxes: vec![Rect::new(mx, my, bw, bh)],
            seed_index: None,
            source: None,
        };
        let spec = OcclusionSpec {
            kind: OcclusionType::GrayRect,
            level,
            occluder_id: None,
            placement_seed: rng.next_u64(),
        };
        let out = match compose(&sample, &spec, &bank, gray, &ComposeOptions::default()) {
            Ok(o) => o,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        let foot = out.placed[0];
        let mut painted = 0u64;
        let mut outside_changed = false;
        for y in 0..h {
            for x in 0..w {
                let (a, b) = (sample.raster.pixel(x, y), out.raster.pixel(x, y));
                let inside = x >= foot.x && x < foot.x + foot.w && y >= foot.y && y < foot.y + foot.h;
                if inside {
                    painted += u64::from(b == [128, 128, 128]);
                } else if a != b {
                    outside_changed = true;
                }
            }
        }
        let measured = painted as f64 / (bw * bh) as f64;
        let err = (measured - level as f64 / 100.0).abs();
        worst = worst.max(err);
        let within_box =
            foot.w == 0 || (foot.x >= mx && foot.y >= my && foot.x + foot.w <= mx + bw && foot.y + foot.h <= my + bh);
        let aspect = rng.uniform(0.1, 10.0);
        let (ow, oh) = solve_object(bw, bh, aspect, level);
        if err > 0.02 || outside_changed || !within_box || ow > bw || oh > bh {
            failures += 1;
        }
    }
    CheckOutcome {
        pass: failures == 0,
        cases: draws,
        worst,
        note: None,
    }
}

/// Malformed pixmap headers that must all be rejected.
pub fn malformed_headers() -> Vec<(&'static str, Vec<u8>)> {
    let mut truncated = b"P6\n2 2\n255\n".to_vec();
    truncated.extend_from_slice(&[1, 2, 3]);
    let mut trailing = b"P6\n1 1\n255\n".to_vec();
    trailing.extend_from_slice(&[1, 2, 3, 4]);
    vec![
        ("empty", Vec::new()),
        ("bad magic", b"P3\n1 1\n255\n\0\0\0".to_vec()),
        ("zero width", b"P6\n0 1\n255\n".to_vec()),
        ("maxval 65535", b"P6\n1 1\n65535\n\0\0\0\0\0\0".to_vec()),
        ("maxval 0", b"P6\n1 1\n0\n\0\0\0".to_vec()),
        ("negative size", b"P6\n-1 1\n255\n\0\0\0".to_vec()),
        ("missing maxval", b"P6\n1 1\n".to_vec()),
        ("non-numeric", b"P6\nab 1\n255\n\0\0\0".to_vec()),
        ("truncated payload", truncated),
        ("trailing bytes", trailing),
    ]
}

/// Random rasters through the P6 writer and reader, plus the malformed
/// header corpus.
pub fn codec_round_trip(seed: u64, rasters: usize) -> CheckOutcome {
    let mut failures = 0;
    for k in 0..rasters {
        let mut rng = SplitMix64::derived(seed, k as u64, purpose::VERIFY);
        let (w, h) = (rng.range_inclusive(1, 48) as u32, rng.range_inclusive(1, 48) as u32);
        let data: Vec<u8> = (0..w * h * 3).map(|_| rng.below(256) as u8).collect();
        let r = Raster::new(w, h, data).expect("sized");
        if read_pnm(&write_pnm(&r)).ok().as_ref() != Some(&r) {
            failures += 1;
        }
    }
    let rejected = malformed_headers()
        .iter()
        .filter(|(_, b)| matches!(read_pnm(b), Err(crate::Error::Codec(_))))
        .count();
    CheckOutcome {
        pass: failures == 0 && rejected == malformed_headers().len(),
        cases: rasters + malformed_headers().len(),
        worst: failures as f64,
        note: Some(format!("{rejected} of {} malformed headers rejected", malformed_headers().len())),
    }
}
