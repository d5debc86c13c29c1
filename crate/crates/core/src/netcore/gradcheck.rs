//! Central-difference verification of [`ModelCheckpoint::backward`].

use serde::{Deserialize, Serialize};

use super::loss::{mse_grad, mse_loss, nll_loss, softmax_nll_grad};
use super::model::{flat_gradient, Activation, ForwardPass, Head, ModelCheckpoint, ModelSpec};
use crate::error::{Error, Result};
use crate::rng::{purpose, SplitMix64};

pub const STEP: f64 = 1e-5;
const BATCH: usize = 4;
const MAX_WIDTH: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Samples discarded because a ReLU switched sides within the step.
    pub skipped: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

struct Problem {
    model: ModelCheckpoint,
    x: Vec<f64>,
    labels: Vec<usize>,
    target: Vec<f64>,
}

impl Problem {
    fn loss(&self, pass: &ForwardPass) -> f64 {
        match self.model.spec.head {
            Head::Softmax => nll_loss(pass.probs().expect("softmax"), self.model.num_classes(), &self.labels),
            Head::None => mse_loss(pass.output(), &self.target),
        }
    }

    fn d_output(&self, pass: &ForwardPass) -> Vec<f64> {
        match self.model.spec.head {
            Head::Softmax => softmax_nll_grad(pass.probs().expect("softmax"), self.model.num_classes(), &self.labels),
            Head::None => mse_grad(pass.output(), &self.target),
        }
    }
}

fn relu_signs(spec: &ModelSpec, pass: &ForwardPass) -> Vec<bool> {
    pass.pre_activations()
        .iter()
        .zip(&spec.activations)
        .filter(|(_, a)| **a == Activation::Relu)
        .flat_map(|(z, _)| z.iter().map(|v| *v > 0.0))
        .collect()
}

/// Compares analytic and numeric gradients on `trials` parameters of a
/// randomly initialized model. Passes iff every checked relative error is
/// below `tolerance`.
pub fn grad_check(spec: &ModelSpec, trials: usize, tolerance: f64, seed: u64) -> Result<GradCheckReport> {
    spec.validate()?;
    if let Some(w) = spec.widths.iter().find(|&&w| w >= MAX_WIDTH) {
        return Err(Error::Config(format!("width {w} too large for finite differencing")));
    }
    let mut spec = spec.clone();
    spec.freeze_mask.iter_mut().for_each(|f| *f = false);
    let mut rng = SplitMix64::derived(seed, 0, purpose::GRAD_CHECK);
    let mut model = ModelCheckpoint::init(spec.clone(), seed)?;
    for l in &mut model.layers {
        for b in l.bias.data_mut() {
            *b = rng.uniform(-0.1, 0.1);
        }
    }
    let input = spec.input_width();
    // Inputs jittered away from exact zeros.
    let x = (0..BATCH * input).map(|_| rng.uniform(0.05, 1.0)).collect();
    let labels = (0..BATCH).map(|_| rng.below(spec.output_width() as u64) as usize).collect();
    let target = (0..BATCH * spec.output_width()).map(|_| rng.uniform(0.0, 1.0)).collect();
    let mut p = Problem {
        model,
        x,
        labels,
        target,
    };

    let pass = p.model.forward_from(0, BATCH, &p.x)?;
    let base_signs = relu_signs(&spec, &pass);
    let grads = p.model.backward(&pass, &p.d_output(&pass), false)?;
    let total = p.model.parameter_count();

    let mut report = GradCheckReport {
        checked: 0,
        skipped: 0,
        max_rel_error: 0.0,
        tolerance,
        pass: false,
    };
    let mut attempts = 0;
    while report.checked < trials && attempts < trials * 50 {
        attempts += 1;
        let idx = rng.below(total as u64) as usize;
        let analytic = flat_gradient(&grads, &p.model, idx).expect("all layers trainable");
        let original = *p.model.parameter_mut(idx).expect("in range").1;
        let eval = |v: f64, p: &mut Problem| -> Result<(f64, bool)> {
            *p.model.parameter_mut(idx).expect("in range").1 = v;
            let pass = p.model.forward_from(0, BATCH, &p.x)?;
            Ok((p.loss(&pass), relu_signs(&spec, &pass) == base_signs))
        };
        let (plus, same_plus) = eval(original + STEP, &mut p)?;
        let (minus, same_minus) = eval(original - STEP, &mut p)?;
        *p.model.parameter_mut(idx).expect("in range").1 = original;
        if !(same_plus && same_minus) {
            report.skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * STEP);
        if !numeric.is_finite() || !analytic.is_finite() {
            return Err(Error::Numerics("non-finite gradient during check".into()));
        }
        let rel = relative_error(analytic, numeric);
        report.max_rel_error = report.max_rel_error.max(rel);
        report.checked += 1;
    }
    report.pass = report.checked > 0 && report.max_rel_error < tolerance;
    Ok(report)
}

/// `|a - n| / max(|a|, |n|)`, with both near zero counted as agreement.
pub fn relative_error(a: f64, n: f64) -> f64 {
    let scale = a.abs().max(n.abs());
    if scale < 1e-10 {
        0.0
    } else {
        (a - n).abs() / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaled_default_passes() {
        let spec = ModelSpec::classifier(vec![16, 8, 4, 3]);
        for seed in 0..5 {
            let r = grad_check(&spec, 20, 1e-4, seed).unwrap();
            assert!(r.pass, "seed {seed}: {r:?}");
            assert_eq!(r.checked, 20);
        }
    }

    #[test]
    fn linear_model_near_machine_precision() {
        let mut spec = ModelSpec::classifier(vec![16, 8, 4, 3]);
        spec.activations = vec![Activation::Identity; 3];
        let r = grad_check(&spec, 40, 1e-8, 3).unwrap();
        assert_eq!(r.skipped, 0);
        assert!(r.max_rel_error < 1e-8, "{r:?}");
    }

    #[test]
    fn zero_tolerance_fails() {
        let r = grad_check(&ModelSpec::classifier(vec![6, 4, 3]), 10, 0.0, 1).unwrap();
        assert!(!r.pass);
    }

    #[test]
    fn autoencoder_shape_passes() {
        let spec = ModelSpec {
            widths: vec![12, 6, 3, 6, 12],
            ..ModelSpec::autoencoder(3)
        };
        let r = grad_check(&spec, 20, 1e-4, 2).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn wide_spec_rejected() {
        assert!(grad_check(&ModelSpec::default_classifier(10), 1, 1e-4, 0).is_err());
    }
}
