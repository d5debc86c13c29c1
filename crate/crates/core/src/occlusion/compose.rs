use super::geometry::{place, solve_indomain, solve_object, solve_rect};
use super::{OcclusionSpec, OcclusionType};
use crate::corpus::LabeledSample;
use crate::error::{Error, Result};
use crate::imagination::bank::OccluderBank;
use crate::raster::{fill_rect_in_place, overlay_in_place, resample, Color, Raster, Rect, TransparencyRule};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComposeOptions {
    pub indomain_rule: TransparencyRule,
    pub outdomain_rule: TransparencyRule,
}

impl Default for ComposeOptions {
    fn default() -> Self {
        Self {
            indomain_rule: TransparencyRule::KeyColor(2),
            outdomain_rule: TransparencyRule::KeyColor(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComposedSample {
    pub base_id: String,
    pub raster: Raster,
    pub class_id: usize,
    pub spec: OcclusionSpec,
    /// Pasted occluder rectangle per bounding box (zero-sized when nothing
    /// was pasted).
    pub placed: Vec<Rect>,
    pub nominal_level: u32,
    /// Pasted occluder area over bounding-box area.
    pub area_ratio: f64,
    /// Visible occluder pixels written inside the boxes over box area.
    pub opaque_fraction: f64,
    /// The occluder had to shrink below the nominal level to fit.
    pub clamped: bool,
}

/// Occludes every bounding box of `sample` according to `spec`.
pub fn compose(
    sample: &LabeledSample,
    spec: &OcclusionSpec,
    bank: &OccluderBank,
    gray: Color,
    options: &ComposeOptions,
) -> Result<ComposedSample> {
    spec.validate()?;
    let occluder = match &spec.occluder_id {
        Some(id) => Some(
            bank.get(id)
                .ok_or_else(|| Error::Bank(format!("occluder `{id}` not in bank")))?,
        ),
        None => None,
    };
    let mut raster = sample.raster.clone();
    let mut rng = SplitMix64::new(spec.placement_seed);
    let mut placed = Vec::with_capacity(sample.bboxes.len());
    let (mut box_area, mut pasted_area, mut written) = (0u64, 0u64, 0u64);
    let mut clamped = false;

    for &bbox in &sample.bboxes {
        box_area += bbox.area();
        let (w, h) = match spec.kind {
            OcclusionType::GrayRect => solve_rect(bbox.w, bbox.h, spec.level),
            OcclusionType::OutOfDomain => {
                let occ = &occluder.expect("validated").raster;
                let aspect = occ.width() as f64 / occ.height() as f64;
                solve_object(bbox.w, bbox.h, aspect, spec.level)
            }
            OcclusionType::InDomain => {
                let s = solve_indomain(bbox.w, bbox.h, spec.level);
                clamped |= s.clamped;
                (s.w, s.h)
            }
        };
        if w == 0 || h == 0 {
            placed.push(Rect::new(bbox.x, bbox.y, 0, 0));
            continue;
        }
        let (x, y) = place(bbox, w, h, &mut rng);
        let rect = Rect::new(x, y, w, h);
        written += match spec.kind {
            OcclusionType::GrayRect => fill_rect_in_place(&mut raster, rect, gray),
            kind => {
                let rule = if kind == OcclusionType::InDomain {
                    options.indomain_rule
                } else {
                    options.outdomain_rule
                };
                let scaled = resample(&occluder.expect("validated").raster, w, h)?;
                overlay_in_place(&mut raster, &scaled, x as i64, y as i64, rule).written
            }
        };
        pasted_area += rect.area();
        placed.push(rect);
    }

    Ok(ComposedSample {
        base_id: sample.id.clone(),
        raster,
        class_id: sample.class_id,
        spec: spec.clone(),
        placed,
        nominal_level: spec.level,
        area_ratio: pasted_area as f64 / box_area as f64,
        opaque_fraction: written as f64 / box_area as f64,
        clamped,
    })
}
