//! Minibatch training loop shared by classifiers and autoencoders.

use super::loss::{mse_grad, mse_loss, nll_loss, softmax_nll_grad};
use super::model::{Head, ModelCheckpoint};
use super::optim::{sgd_step, SgdState, TrainConfig};
use crate::error::{Error, Result};
use crate::rng::{purpose, SplitMix64};

#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    /// Class ids for a softmax head.
    Labels(&'a [usize]),
    /// Reproduce the input (mean squared error).
    Reconstruct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Batch loss before each update.
    pub losses: Vec<f64>,
    pub iterations: u64,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.losses.last().copied()
    }
}

/// Trains `model` in place on `n` rows of `inputs`.
///
/// Layers below the first trainable one are evaluated once up front.
pub fn fit(
    model: &mut ModelCheckpoint,
    inputs: &[f64],
    n: usize,
    targets: Targets<'_>,
    config: &TrainConfig,
    mut on_iter: impl FnMut(u64, f64, &ModelCheckpoint),
) -> Result<TrainReport> {
    config.validate()?;
    model.validate()?;
    let width = model.spec.input_width();
    if n == 0 {
        return Err(Error::EmptyInput("no training rows".into()));
    }
    if inputs.len() != n * width {
        return Err(Error::Shape(format!("{} values is not {n} rows of {width}", inputs.len())));
    }
    match targets {
        Targets::Labels(labels) => {
            if model.spec.head != Head::Softmax {
                return Err(Error::Config("label targets need a softmax head".into()));
            }
            if labels.len() != n {
                return Err(Error::Shape("one label per row required".into()));
            }
            let c = model.num_classes();
            if let Some(bad) = labels.iter().find(|&&y| y >= c) {
                return Err(Error::Shape(format!("label {bad} out of range for {c} classes")));
            }
        }
        Targets::Reconstruct => {
            if model.spec.output_width() != width {
                return Err(Error::Shape("reconstruction needs output width = input width".into()));
            }
        }
    }

    let mut report = TrainReport {
        losses: Vec::with_capacity(config.max_iters as usize),
        iterations: 0,
    };
    let Some(start) = model.spec.freeze_mask.iter().position(|f| !f) else {
        return Ok(report);
    };
    let cached;
    let (feed, feed_width) = if start == 0 {
        (inputs, width)
    } else {
        cached = model.prefix(start, n, inputs)?;
        (cached.as_slice(), model.spec.widths[start])
    };

    let batch = config.batch_size.min(n);
    let mut state = SgdState::new(model);
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch = 0u64;
    let mut cursor = n;
    let mut xb = Vec::with_capacity(batch * feed_width);
    let mut yb = Vec::with_capacity(batch);
    let mut tb = Vec::new();
    for iter in 0..config.max_iters {
        if cursor + batch > n {
            order.iter_mut().enumerate().for_each(|(i, o)| *o = i);
            SplitMix64::derived(config.seed, epoch, purpose::BATCH_ORDER).shuffle(&mut order);
            epoch += 1;
            cursor = 0;
        }
        let rows = &order[cursor..cursor + batch];
        cursor += batch;
        xb.clear();
        yb.clear();
        tb.clear();
        for &r in rows {
            xb.extend_from_slice(&feed[r * feed_width..(r + 1) * feed_width]);
            match targets {
                Targets::Labels(l) => yb.push(l[r]),
                Targets::Reconstruct => tb.extend_from_slice(&inputs[r * width..(r + 1) * width]),
            }
        }
        let pass = model.forward_from(start, batch, &xb)?;
        let (loss, d_out) = match targets {
            Targets::Labels(_) => {
                let c = model.num_classes();
                let probs = pass.probs().expect("softmax head");
                (nll_loss(probs, c, &yb), softmax_nll_grad(probs, c, &yb))
            }
            Targets::Reconstruct => (mse_loss(pass.output(), &tb), mse_grad(pass.output(), &tb)),
        };
        if !loss.is_finite() {
            return Err(Error::Training(format!("loss became {loss} at iteration {iter}")));
        }
        let grads = model.backward(&pass, &d_out, false)?;
        sgd_step(model, &mut state, &grads, iter, config);
        report.losses.push(loss);
        report.iterations = iter + 1;
        on_iter(iter, loss, model);
    }
    model.meta.provenance.iterations += report.iterations;
    Ok(report)
}
