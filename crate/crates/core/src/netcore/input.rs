//! Raster to network-input conversion.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::raster::{resample_plane, Raster};

pub const INPUT_SIDE: u32 = 32;
pub const INPUT_WIDTH: usize = (INPUT_SIDE * INPUT_SIDE) as usize;

/// Grayscale in `[0, 1]`, resampled to 32x32. No centering.
pub fn raster_input(r: &Raster) -> Vec<f64> {
    resample_plane(&r.gray_f64(), r.width(), r.height(), INPUT_SIDE, INPUT_SIDE)
}

/// Concatenated [`raster_input`] rows.
pub fn stack_inputs<R: AsRef<Raster> + Sync>(rasters: &[R]) -> Vec<f64> {
    let rows: Vec<Vec<f64>> = rasters.par_iter().map(|r| raster_input(r.as_ref())).collect();
    rows.concat()
}

impl AsRef<Raster> for Raster {
    fn as_ref(&self) -> &Raster {
        self
    }
}

/// Mean over every value, summed in order.
pub fn scalar_mean(rows: &[f64]) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("no inputs to average".into()));
    }
    Ok(rows.iter().sum::<f64>() / rows.len() as f64)
}

pub fn center(rows: &mut [f64], mean: f64) {
    rows.iter_mut().for_each(|v| *v -= mean);
}

/// Single-channel `[0, 1]` plane to a 3-channel raster.
pub fn plane_to_raster(plane: &[f64], side: u32) -> Raster {
    let gray: Vec<u8> = plane.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    Raster::from_gray(side, side, &gray).expect("plane matches side")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Color;

    #[test]
    fn flat_raster_is_flat_input() {
        let r = Raster::filled(50, 20, Color::gray(51));
        let x = raster_input(&r);
        assert_eq!(x.len(), INPUT_WIDTH);
        assert!(x.iter().all(|v| (v - 0.2).abs() < 1e-12));
    }

    #[test]
    fn plane_round_trip() {
        let plane: Vec<f64> = (0..INPUT_WIDTH).map(|i| (i % 256) as f64 / 255.0).collect();
        let r = plane_to_raster(&plane, INPUT_SIDE);
        let back = raster_input(&r);
        for (a, b) in plane.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_mean_errors() {
        assert!(scalar_mean(&[]).is_err());
    }
}
