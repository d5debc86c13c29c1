//! Decoder-only image generator trained as half of an autoencoder.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcore::input::INPUT_WIDTH;
use crate::netcore::loss::mse_loss;
use crate::netcore::{fit, ModelCheckpoint, ModelSpec, Targets, TrainConfig};

pub const LATENT_WIDTH: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub epochs: u64,
    pub batch_size: usize,
    pub base_lr: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 32,
            base_lr: 4.0,
            momentum: 0.9,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    fn train_config(&self, rows: usize) -> TrainConfig {
        let per_epoch = rows.div_ceil(self.batch_size.min(rows).max(1)) as u64;
        let max_iters = self.epochs * per_epoch;
        TrainConfig {
            batch_size: self.batch_size,
            momentum: self.momentum,
            base_lr: self.base_lr,
            lr_drop_factor: 10.0,
            // Two drops over the run.
            lr_drop_every: (max_iters / 2 + 1).max(1),
            max_iters,
            weight_decay: 0.0,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorReport {
    pub iterations: u64,
    /// Reconstruction MSE over the whole training set after training.
    pub final_mse: f64,
    /// MSE of predicting the per-pixel training mean for every row.
    pub constant_mse: f64,
}

/// Trains a `1024-64-16-64-1024` autoencoder on `[0, 1]` inputs and returns
/// its decoder.
pub fn train_generator(inputs: &[f64], config: &GeneratorConfig) -> Result<(ModelCheckpoint, GeneratorReport)> {
    if inputs.is_empty() || !inputs.len().is_multiple_of(INPUT_WIDTH) {
        return Err(Error::Shape(format!("{} values is not a whole number of images", inputs.len())));
    }
    let n = inputs.len() / INPUT_WIDTH;
    let mut auto = ModelCheckpoint::init(ModelSpec::autoencoder(LATENT_WIDTH), config.seed)?;
    let train = config.train_config(n);
    let report = if train.max_iters == 0 {
        None
    } else {
        Some(fit(&mut auto, inputs, n, Targets::Reconstruct, &train, |_, _, _| {})?)
    };
    let recon = auto.forward_from(0, n, inputs)?;
    let final_mse = mse_loss(recon.output(), inputs);
    if !final_mse.is_finite() {
        return Err(Error::Training("reconstruction error is not finite".into()));
    }
    let mut pixel_mean = vec![0.0; INPUT_WIDTH];
    for row in inputs.chunks_exact(INPUT_WIDTH) {
        pixel_mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    pixel_mean.iter_mut().for_each(|m| *m /= n as f64);
    let constant: Vec<f64> = pixel_mean.iter().copied().cycle().take(inputs.len()).collect();
    let constant_mse = mse_loss(&constant, inputs);

    let mut generator = ModelCheckpoint {
        spec: ModelSpec::generator(LATENT_WIDTH),
        layers: auto.layers.split_off(2),
        meta: auto.meta,
    };
    generator.meta.provenance.iterations = report.as_ref().map_or(0, |r| r.iterations);
    generator.meta.provenance.note = if report.is_some() {
        "generator".into()
    } else {
        "generator (untrained)".into()
    };
    generator.validate()?;
    let iterations = generator.meta.provenance.iterations;
    Ok((
        generator,
        GeneratorReport {
            iterations,
            final_mse,
            constant_mse,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_glyph_corpus, CorpusConfig};
    use crate::netcore::input::stack_inputs;

    fn inputs() -> Vec<f64> {
        let m = generate_glyph_corpus(&CorpusConfig {
            classes: 4,
            per_class: 30,
            image_size: 32,
            seed: 3,
        })
        .unwrap();
        let rasters: Vec<_> = m.samples.iter().map(|s| &s.raster).collect();
        stack_inputs(&rasters)
    }

    #[test]
    fn beats_constant_image() {
        let x = inputs();
        let cfg = GeneratorConfig {
            epochs: 40,
            ..GeneratorConfig::default()
        };
        let (g, rep) = train_generator(&x, &cfg).unwrap();
        assert_eq!(g.spec.widths, vec![16, 64, 1024]);
        assert!(rep.final_mse < rep.constant_mse, "{rep:?}");
    }

    #[test]
    fn zero_epochs_is_init() {
        let x = inputs();
        let cfg = GeneratorConfig {
            epochs: 0,
            ..GeneratorConfig::default()
        };
        let (g, rep) = train_generator(&x, &cfg).unwrap();
        assert_eq!(rep.iterations, 0);
        assert!(g.meta.provenance.note.contains("untrained"));
        let init = ModelCheckpoint::init(ModelSpec::autoencoder(LATENT_WIDTH), cfg.seed).unwrap();
        assert_eq!(g.layers[..], init.layers[2..]);
    }

    #[test]
    fn deterministic() {
        let x = inputs();
        let cfg = GeneratorConfig {
            epochs: 3,
            ..GeneratorConfig::default()
        };
        let a = train_generator(&x, &cfg).unwrap().0;
        let b = train_generator(&x, &cfg).unwrap().0;
        assert_eq!(
            crate::netcore::checkpoint::encode(&a).unwrap(),
            crate::netcore::checkpoint::encode(&b).unwrap()
        );
    }
}
