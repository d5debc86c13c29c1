//! Momentum SGD with weight decay and a step learning-rate schedule.

use serde::{Deserialize, Serialize};

use super::model::{Gradients, ModelCheckpoint};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub momentum: f64,
    pub base_lr: f64,
    pub lr_drop_factor: f64,
    pub lr_drop_every: u64,
    pub max_iters: u64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn paper() -> Self {
        Self {
            batch_size: 256,
            momentum: 0.9,
            base_lr: 0.0005,
            lr_drop_factor: 10.0,
            lr_drop_every: 5000,
            max_iters: 10_000,
            weight_decay: 0.001,
            seed: 0,
        }
    }

    pub fn desk() -> Self {
        Self {
            batch_size: 64,
            lr_drop_every: 1000,
            max_iters: 3000,
            ..Self::paper()
        }
    }

    /// `base_lr / drop_factor^floor(iter / drop_every)`.
    pub fn lr(&self, iter: u64) -> f64 {
        let drops = (iter / self.lr_drop_every) as i32;
        self.base_lr / self.lr_drop_factor.powi(drops)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return bad("base_lr must be positive");
        }
        if !(self.lr_drop_factor > 0.0 && self.lr_drop_factor.is_finite()) {
            return bad("lr_drop_factor must be positive");
        }
        if self.lr_drop_every == 0 {
            return bad("lr_drop_every must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

/// Velocity buffers for the trainable layers.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdState {
    velocity: Vec<Option<(Vec<f64>, Vec<f64>)>>,
}

impl SgdState {
    pub fn new(model: &ModelCheckpoint) -> Self {
        let velocity = model
            .layers
            .iter()
            .zip(&model.spec.freeze_mask)
            .map(|(l, &frozen)| (!frozen).then(|| (vec![0.0; l.weight.len()], vec![0.0; l.bias.len()])))
            .collect();
        Self { velocity }
    }
}

/// `v <- momentum*v - lr*(g + decay*w)`, `w <- w + v`; biases skip the
/// decay term. Frozen layers are untouched.
pub fn sgd_step(model: &mut ModelCheckpoint, state: &mut SgdState, grads: &Gradients, iter: u64, config: &TrainConfig) {
    let lr = config.lr(iter);
    for (k, layer) in model.layers.iter_mut().enumerate() {
        let Some((vw, vb)) = state.velocity[k].as_mut() else {
            continue;
        };
        let g = grads.layers[k].as_ref();
        for (i, (w, v)) in layer.weight.data_mut().iter_mut().zip(vw.iter_mut()).enumerate() {
            let gi = g.map_or(0.0, |g| g.weight[i]);
            *v = config.momentum * *v - lr * (gi + config.weight_decay * *w);
            *w += *v;
        }
        for (i, (b, v)) in layer.bias.data_mut().iter_mut().zip(vb.iter_mut()).enumerate() {
            let gi = g.map_or(0.0, |g| g.bias[i]);
            *v = config.momentum * *v - lr * gi;
            *b += *v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::model::{LayerGrad, ModelSpec};

    #[test]
    fn paper_schedule_breakpoint() {
        let c = TrainConfig::paper();
        assert_eq!(c.lr(0), 0.0005);
        assert_eq!(c.lr(4999), 0.0005);
        assert!((c.lr(5000) - 0.00005).abs() < 1e-18);
        assert!((c.lr(9999) - 0.00005).abs() < 1e-18);
    }

    #[test]
    fn schedule_non_increasing() {
        let c = TrainConfig::desk();
        let mut prev = f64::INFINITY;
        for it in 0..5000 {
            let lr = c.lr(it);
            assert!(lr <= prev);
            if it % c.lr_drop_every != 0 {
                assert_eq!(lr, prev);
            }
            prev = lr;
        }
    }

    fn scalar_model() -> ModelCheckpoint {
        let mut spec = ModelSpec::classifier(vec![1, 1]);
        spec.head = crate::netcore::model::Head::None;
        ModelCheckpoint::zeros(spec).unwrap()
    }

    #[test]
    fn plain_step() {
        let mut m = scalar_model();
        let mut st = SgdState::new(&m);
        let cfg = TrainConfig {
            momentum: 0.0,
            weight_decay: 0.0,
            base_lr: 0.1,
            ..TrainConfig::desk()
        };
        let g = Gradients {
            layers: vec![Some(LayerGrad {
                weight: vec![1.0],
                bias: vec![0.0],
            })],
            input: None,
        };
        sgd_step(&mut m, &mut st, &g, 0, &cfg);
        assert!((m.layers[0].weight.data()[0] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_fixed_point() {
        let mut m = ModelCheckpoint::init(ModelSpec::classifier(vec![4, 3, 2]), 3).unwrap();
        let before = m.clone();
        let mut st = SgdState::new(&m);
        let cfg = TrainConfig {
            weight_decay: 0.0,
            ..TrainConfig::desk()
        };
        let g = Gradients {
            layers: vec![None, None],
            input: None,
        };
        sgd_step(&mut m, &mut st, &g, 0, &cfg);
        assert_eq!(m, before);
    }

    #[test]
    fn frozen_layer_untouched() {
        let spec = ModelSpec::classifier(vec![4, 3, 2]).with_trainable_top(1);
        let mut m = ModelCheckpoint::init(spec, 5).unwrap();
        let before = m.layers[0].clone();
        let mut st = SgdState::new(&m);
        let g = Gradients {
            layers: vec![
                Some(LayerGrad {
                    weight: vec![1.0; 12],
                    bias: vec![1.0; 3],
                }),
                Some(LayerGrad {
                    weight: vec![1.0; 6],
                    bias: vec![1.0; 2],
                }),
            ],
            input: None,
        };
        sgd_step(&mut m, &mut st, &g, 0, &TrainConfig::desk());
        assert_eq!(m.layers[0], before);
        assert_ne!(m.layers[1].weight.data()[0], 0.0);
    }

    #[test]
    fn rejects_bad_momentum() {
        let c = TrainConfig {
            momentum: 1.0,
            ..TrainConfig::desk()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }
}
