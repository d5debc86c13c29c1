//! Sliding gray-rectangle confidence maps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::LabeledSample;
use crate::error::{Error, Result};
use crate::netcore::input::raster_input;
use crate::netcore::ModelCheckpoint;
use crate::occlusion::solve_rect;
use crate::raster::{fill_rect, write_pgm, Color, Rect};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Confidence {
    Probability,
    Logit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatMap {
    pub rows: usize,
    pub cols: usize,
    pub stride: u32,
    pub occluder_w: u32,
    pub occluder_h: u32,
    pub level: u32,
    pub target_class: usize,
    pub confidence: Confidence,
    /// Score with nothing pasted.
    pub unoccluded: f64,
    /// Row-major scores; cell `(r, c)` has the occluder at
    /// `(c * stride, r * stride)` inside the box.
    pub values: Vec<f64>,
}

/// Number of placements along an axis.
pub fn grid_len(extent: u32, occ: u32, stride: u32) -> Result<usize> {
    if stride == 0 {
        return Err(Error::Config("stride must be at least 1".into()));
    }
    if occ > extent {
        return Err(Error::Size(format!("occluder side {occ} exceeds box side {extent}")));
    }
    Ok(((extent - occ) / stride) as usize + 1)
}

/// `max(1, round(side / 8))` for the longer occluder side.
pub fn default_stride(occ_w: u32, occ_h: u32) -> u32 {
    ((occ_w.max(occ_h) as f64 / 8.0).round() as u32).max(1)
}

fn score(model: &ModelCheckpoint, raster: &crate::raster::Raster, class: usize, mode: Confidence) -> Result<f64> {
    let mut x = raster_input(raster);
    x.iter_mut().for_each(|v| *v -= model.meta.input_mean);
    let pass = model.forward_from(0, 1, &x)?;
    Ok(match mode {
        Confidence::Probability => pass.probs().ok_or_else(|| Error::Config("model has no softmax head".into()))?[class],
        Confidence::Logit => pass.logits()[class],
    })
}

/// Slides a `level`% gray rectangle over the first bounding box of
/// `sample` and records the true-class score at each position.
pub fn heatmap(
    model: &ModelCheckpoint,
    sample: &LabeledSample,
    level: u32,
    stride: Option<u32>,
    gray: Color,
    mode: Confidence,
) -> Result<HeatMap> {
    let bbox = *sample
        .bboxes
        .first()
        .ok_or_else(|| Error::EmptyInput(format!("sample {} has no bounding box", sample.id)))?;
    if level > 100 {
        return Err(Error::Config(format!("level {level} above 100")));
    }
    let (ow, oh) = solve_rect(bbox.w, bbox.h, level);
    let stride = stride.unwrap_or_else(|| default_stride(ow, oh));
    let cols = grid_len(bbox.w, ow, stride)?;
    let rows = grid_len(bbox.h, oh, stride)?;
    let target = sample.class_id;
    let unoccluded = score(model, &sample.raster, target, mode)?;
    let values = (0..rows * cols)
        .into_par_iter()
        .map(|i| {
            let (r, c) = ((i / cols) as u32, (i % cols) as u32);
            if ow == 0 || oh == 0 {
                return Ok(unoccluded);
            }
            let rect = Rect::new(bbox.x + c * stride, bbox.y + r * stride, ow, oh);
            score(model, &fill_rect(&sample.raster, rect, gray), target, mode)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HeatMap {
        rows,
        cols,
        stride,
        occluder_w: ow,
        occluder_h: oh,
        level,
        target_class: target,
        confidence: mode,
        unoccluded,
        values,
    })
}

impl HeatMap {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Brightness proportional to confidence; logits are min-max scaled.
    pub fn to_pgm(&self) -> Vec<u8> {
        let (lo, hi) = match self.confidence {
            Confidence::Probability => (0.0, 1.0),
            Confidence::Logit => self
                .values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v))),
        };
        let span = if hi > lo { hi - lo } else { 1.0 };
        let gray: Vec<u8> = self
            .values
            .iter()
            .map(|v| (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        write_pgm(self.cols as u32, self.rows as u32, &gray).expect("grid is non-empty")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::ModelSpec;
    use crate::raster::Raster;

    fn sample(w: u32, h: u32) -> LabeledSample {
        let gray: Vec<u8> = (0..w * h).map(|i| (i * 37 % 251) as u8).collect();
        LabeledSample {
            id: "h".into(),
            raster: Raster::from_gray(w, h, &gray).unwrap(),
            class_id: 1,
            bboxes: vec![Rect::new(0, 0, w, h)],
            seed_index: None,
            source: None,
        }
    }

    #[test]
    fn grid_formula_exhaustive() {
        for extent in 1..=64u32 {
            for occ in 0..=extent {
                for stride in 1..=extent {
                    let n = grid_len(extent, occ, stride).unwrap();
                    let brute = (0..=extent - occ).step_by(stride as usize).count();
                    assert_eq!(n, brute);
                }
            }
        }
        assert!(matches!(grid_len(10, 11, 1), Err(Error::Size(_))));
        assert!(grid_len(10, 5, 0).is_err());
    }

    #[test]
    fn full_occluder_single_cell() {
        let m = ModelCheckpoint::init(ModelSpec::classifier(vec![1024, 8, 3]), 1).unwrap();
        let h = heatmap(&m, &sample(20, 12), 100, Some(1), Color::gray(90), Confidence::Probability).unwrap();
        assert_eq!((h.rows, h.cols), (1, 1));
        assert_eq!((h.occluder_w, h.occluder_h), (20, 12));
    }

    #[test]
    fn level_zero_is_flat() {
        let m = ModelCheckpoint::init(ModelSpec::classifier(vec![1024, 8, 3]), 1).unwrap();
        let h = heatmap(&m, &sample(16, 16), 0, Some(4), Color::gray(90), Confidence::Probability).unwrap();
        assert!(h.values.iter().all(|&v| v == h.unoccluded));
        assert_eq!((h.rows, h.cols), (5, 5));
    }

    #[test]
    fn dims_and_render() {
        let m = ModelCheckpoint::init(ModelSpec::classifier(vec![1024, 8, 3]), 1).unwrap();
        let h = heatmap(&m, &sample(40, 32), 60, None, Color::gray(90), Confidence::Logit).unwrap();
        let (ow, oh) = solve_rect(40, 32, 60);
        let s = default_stride(ow, oh);
        assert_eq!(h.cols, ((40 - ow) / s + 1) as usize);
        assert_eq!(h.rows, ((32 - oh) / s + 1) as usize);
        let pgm = h.to_pgm();
        assert!(pgm.starts_with(format!("P5\n{} {}\n255\n", h.cols, h.rows).as_bytes()));
    }
}
