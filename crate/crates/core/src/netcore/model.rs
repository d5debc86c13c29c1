//! Fully connected networks: specification, initialization, forward and
//! backward passes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tensor::{axpy, dot, Tensor};
use crate::error::{Error, Result};
use crate::rng::{purpose, SplitMix64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Identity => z,
        }
    }

    /// Derivative given pre-activation `z` and output `a`. The ReLU
    /// subgradient at 0 is 0.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Identity => 1.0,
        }
    }
}

/// Output head applied after the last layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Softmax,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub widths: Vec<usize>,
    pub activations: Vec<Activation>,
    pub head: Head,
    /// `true` marks a layer whose parameters never change.
    pub freeze_mask: Vec<bool>,
}

impl ModelSpec {
    /// ReLU hidden layers, linear top layer, softmax head.
    pub fn classifier(widths: Vec<usize>) -> Self {
        let layers = widths.len().saturating_sub(1);
        let mut activations = vec![Activation::Relu; layers];
        if let Some(last) = activations.last_mut() {
            *last = Activation::Identity;
        }
        Self {
            widths,
            activations,
            head: Head::Softmax,
            freeze_mask: vec![false; layers],
        }
    }

    /// 32x32 input, two ReLU hidden layers of 256 and 64.
    pub fn default_classifier(classes: usize) -> Self {
        Self::classifier(vec![32 * 32, 256, 64, classes])
    }

    /// Latent code to 32x32 image in (0, 1).
    pub fn generator(latent: usize) -> Self {
        Self {
            widths: vec![latent, 64, 32 * 32],
            activations: vec![Activation::Relu, Activation::Sigmoid],
            head: Head::None,
            freeze_mask: vec![false; 2],
        }
    }

    /// Encoder mirrored onto [`ModelSpec::generator`]; the last two layers
    /// are the generator.
    pub fn autoencoder(latent: usize) -> Self {
        Self {
            widths: vec![32 * 32, 64, latent, 64, 32 * 32],
            activations: vec![
                Activation::Relu,
                Activation::Identity,
                Activation::Relu,
                Activation::Sigmoid,
            ],
            head: Head::None,
            freeze_mask: vec![false; 4],
        }
    }

    pub fn layer_count(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("validated spec")
    }

    /// Freezes everything except the top `trainable` layers.
    pub fn with_trainable_top(mut self, trainable: usize) -> Self {
        let n = self.layer_count();
        for (k, f) in self.freeze_mask.iter_mut().enumerate() {
            *f = k + trainable < n;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(Error::Shape("a model needs at least one layer".into()));
        }
        if self.widths.contains(&0) {
            return Err(Error::Shape(format!("zero width in {:?}", self.widths)));
        }
        let n = self.layer_count();
        if self.activations.len() != n || self.freeze_mask.len() != n {
            return Err(Error::Shape(format!(
                "{n} layers but {} activations and {} freeze flags",
                self.activations.len(),
                self.freeze_mask.len()
            )));
        }
        Ok(())
    }
}

/// One dense layer; `weight` is `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Layer {
    pub fn fan_in(&self) -> usize {
        self.weight.dims()[1]
    }

    pub fn fan_out(&self) -> usize {
        self.weight.dims()[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub iterations: u64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Scalar subtracted from grayscale inputs before the first layer.
    pub input_mean: f64,
    pub provenance: Provenance,
}

impl Default for CheckpointMeta {
    fn default() -> Self {
        Self {
            input_mean: 0.0,
            provenance: Provenance {
                config_hash: String::new(),
                iterations: 0,
                note: "init".into(),
            },
        }
    }
}

/// A network with its parameters and metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub spec: ModelSpec,
    pub layers: Vec<Layer>,
    pub meta: CheckpointMeta,
}

/// Cached activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    n: usize,
    start: usize,
    widths: Vec<usize>,
    /// `inputs[k]` feeds layer `start + k`; the final entry is the output.
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    probs: Option<Vec<f64>>,
}

/// Tap names exposed by [`ForwardPass::tap`].
pub const TAP_TOP: &str = "top";
pub const TAP_PENULTIMATE: &str = "penultimate";

impl ForwardPass {
    pub fn batch_size(&self) -> usize {
        self.n
    }

    /// Output of the network (after the last activation, before the head).
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("non-empty")
    }

    /// Pre-activation of the last layer.
    pub fn logits(&self) -> &[f64] {
        self.pre.last().expect("non-empty")
    }

    pub fn probs(&self) -> Option<&[f64]> {
        self.probs.as_deref()
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("non-empty")
    }

    /// `"top"`: last-layer pre-activations. `"penultimate"`: input to the
    /// last layer.
    pub fn tap(&self, name: &str) -> Option<(&[f64], usize)> {
        let l = self.pre.len();
        match name {
            TAP_TOP => Some((&self.pre[l - 1], self.widths[l])),
            TAP_PENULTIMATE => Some((&self.acts[l - 1], self.widths[l - 1])),
            _ => None,
        }
    }

    /// Pre-activations of every layer, for kink detection.
    pub fn pre_activations(&self) -> &[Vec<f64>] {
        &self.pre
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// `None` for frozen layers and layers below the pass start.
    pub layers: Vec<Option<LayerGrad>>,
    pub input: Option<Vec<f64>>,
}

impl ModelCheckpoint {
    /// Uniform Glorot initialization, zero biases.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let layers = (0..spec.layer_count())
            .map(|k| {
                let (fan_in, fan_out) = (spec.widths[k], spec.widths[k + 1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let mut rng = SplitMix64::derived(seed, k as u64, purpose::WEIGHT_INIT);
                let w = (0..fan_in * fan_out).map(|_| rng.uniform(-bound, bound)).collect();
                Layer {
                    weight: Tensor::new(vec![fan_out, fan_in], w).expect("sized"),
                    bias: Tensor::zeros(vec![fan_out]),
                }
            })
            .collect();
        Ok(Self {
            spec,
            layers,
            meta: CheckpointMeta::default(),
        })
    }

    /// All-zero parameters.
    pub fn zeros(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let layers = (0..spec.layer_count())
            .map(|k| Layer {
                weight: Tensor::zeros(vec![spec.widths[k + 1], spec.widths[k]]),
                bias: Tensor::zeros(vec![spec.widths[k + 1]]),
            })
            .collect();
        Ok(Self {
            spec,
            layers,
            meta: CheckpointMeta::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.layers.len() != self.spec.layer_count() {
            return Err(Error::Shape("layer count differs from spec".into()));
        }
        for (k, l) in self.layers.iter().enumerate() {
            let (i, o) = (self.spec.widths[k], self.spec.widths[k + 1]);
            if l.weight.dims() != [o, i] || l.bias.dims() != [o] {
                return Err(Error::Shape(format!(
                    "layer {k}: weight {:?}, bias {:?}, expected ({o}, {i}) and ({o})",
                    l.weight.dims(),
                    l.bias.dims()
                )));
            }
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.spec.output_width()
    }

    pub fn forward(&self, batch: &Tensor) -> Result<ForwardPass> {
        self.forward_from(0, batch.rows(), batch.data())
    }

    /// Runs layers `start..` on inputs laid out as `n` rows of
    /// `widths[start]` values.
    pub fn forward_from(&self, start: usize, n: usize, input: &[f64]) -> Result<ForwardPass> {
        let width = self.spec.widths[start];
        if input.len() != n * width || n == 0 {
            return Err(Error::Shape(format!(
                "batch of {} values is not {n} rows of width {width}",
                input.len()
            )));
        }
        let mut acts = vec![input.to_vec()];
        let mut pre = Vec::with_capacity(self.layers.len() - start);
        for k in start..self.layers.len() {
            let layer = &self.layers[k];
            let act = self.spec.activations[k];
            let (fin, fout) = (layer.fan_in(), layer.fan_out());
            let x = acts.last().expect("non-empty");
            let mut z = vec![0.0; n * fout];
            let mut a = vec![0.0; n * fout];
            z.par_chunks_mut(fout)
                .zip(a.par_chunks_mut(fout))
                .zip(x.par_chunks(fin))
                .for_each(|((zr, ar), xr)| {
                    for j in 0..fout {
                        let v = layer.bias.data()[j] + dot(&layer.weight.data()[j * fin..(j + 1) * fin], xr);
                        zr[j] = v;
                        ar[j] = act.apply(v);
                    }
                });
            pre.push(z);
            acts.push(a);
        }
        let probs = match self.spec.head {
            Head::Softmax => Some(super::loss::softmax(pre.last().expect("non-empty"), self.spec.output_width())),
            Head::None => None,
        };
        if let Some(p) = &probs {
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerics("non-finite probabilities".into()));
            }
        }
        Ok(ForwardPass {
            n,
            start,
            widths: self.spec.widths.clone(),
            acts,
            pre,
            probs,
        })
    }

    /// Output of layers `0..upto` (the input to layer `upto`).
    pub fn prefix(&self, upto: usize, n: usize, input: &[f64]) -> Result<Vec<f64>> {
        if upto == 0 {
            return Ok(input.to_vec());
        }
        let mut head = self.clone();
        head.layers.truncate(upto);
        head.spec.widths.truncate(upto + 1);
        head.spec.activations.truncate(upto);
        head.spec.freeze_mask.truncate(upto);
        head.spec.head = Head::None;
        let pass = head.forward_from(0, n, input)?;
        Ok(pass.acts.into_iter().next_back().expect("non-empty"))
    }

    /// Backpropagates `d_output`, the loss gradient with respect to the
    /// network output (post-activation of the last layer).
    pub fn backward(&self, pass: &ForwardPass, d_output: &[f64], want_input: bool) -> Result<Gradients> {
        let n = pass.n;
        let last = self.layers.len();
        if d_output.len() != n * self.spec.output_width() {
            return Err(Error::Shape("output gradient size mismatch".into()));
        }
        let lowest = if want_input {
            pass.start
        } else {
            match (pass.start..last).find(|&k| !self.spec.freeze_mask[k]) {
                Some(k) => k,
                None => {
                    return Ok(Gradients {
                        layers: vec![None; last],
                        input: None,
                    })
                }
            }
        };
        let mut grads: Vec<Option<LayerGrad>> = vec![None; last];
        let mut d_post = d_output.to_vec();
        let mut input_grad = None;
        for k in (lowest..last).rev() {
            let layer = &self.layers[k];
            let (fin, fout) = (layer.fan_in(), layer.fan_out());
            let idx = k - pass.start;
            let z = &pass.pre[idx];
            let a = &pass.acts[idx + 1];
            let x = &pass.acts[idx];
            let act = self.spec.activations[k];
            let delta: Vec<f64> = d_post
                .iter()
                .zip(z.iter().zip(a))
                .map(|(&d, (&zi, &ai))| d * act.derivative(zi, ai))
                .collect();
            if !self.spec.freeze_mask[k] {
                let mut gw = vec![0.0; fout * fin];
                let mut gb = vec![0.0; fout];
                gw.par_chunks_mut(fin).zip(gb.par_iter_mut()).enumerate().for_each(|(j, (row, b))| {
                    for r in 0..n {
                        let d = delta[r * fout + j];
                        *b += d;
                        if d != 0.0 {
                            axpy(d, &x[r * fin..(r + 1) * fin], row);
                        }
                    }
                });
                grads[k] = Some(LayerGrad { weight: gw, bias: gb });
            }
            if k > lowest || want_input {
                let mut d_prev = vec![0.0; n * fin];
                d_prev.par_chunks_mut(fin).enumerate().for_each(|(r, row)| {
                    for j in 0..fout {
                        let d = delta[r * fout + j];
                        if d != 0.0 {
                            axpy(d, &layer.weight.data()[j * fin..(j + 1) * fin], row);
                        }
                    }
                });
                if k == pass.start && want_input {
                    input_grad = Some(d_prev);
                    break;
                }
                d_post = d_prev;
            }
        }
        Ok(Gradients {
            layers: grads,
            input: input_grad,
        })
    }

    /// Total number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Mutable view of parameter `index` in the flat order
    /// `layer0.weight, layer0.bias, layer1.weight, ...`.
    pub fn parameter_mut(&mut self, mut index: usize) -> Option<(usize, &mut f64)> {
        for (k, l) in self.layers.iter_mut().enumerate() {
            let nw = l.weight.len();
            if index < nw {
                return Some((k, &mut l.weight.data_mut()[index]));
            }
            index -= nw;
            let nb = l.bias.len();
            if index < nb {
                return Some((k, &mut l.bias.data_mut()[index]));
            }
            index -= nb;
        }
        None
    }

    /// Rounds every parameter through f32, as stored on disk.
    pub fn quantize(&mut self) {
        for l in &mut self.layers {
            for v in l.weight.data_mut().iter_mut().chain(l.bias.data_mut().iter_mut()) {
                *v = *v as f32 as f64;
            }
        }
    }
}

/// Picks gradient entry `index` in the flat parameter order.
pub fn flat_gradient(grads: &Gradients, model: &ModelCheckpoint, mut index: usize) -> Option<f64> {
    for (k, l) in model.layers.iter().enumerate() {
        let nw = l.weight.len();
        let nb = l.bias.len();
        if index < nw + nb {
            let g = grads.layers[k].as_ref()?;
            return Some(if index < nw { g.weight[index] } else { g.bias[index - nw] });
        }
        index -= nw + nb;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::loss::{argmax, nll_loss, softmax_nll_grad};

    fn batch(rng: &mut SplitMix64, n: usize, w: usize) -> Tensor {
        Tensor::matrix(n, w, (0..n * w).map(|_| rng.uniform(0.0, 1.0)).collect()).unwrap()
    }

    #[test]
    fn zero_weights_give_uniform_probs() {
        let m = ModelCheckpoint::zeros(ModelSpec::classifier(vec![8, 5, 4])).unwrap();
        let mut rng = SplitMix64::new(1);
        let pass = m.forward(&batch(&mut rng, 3, 8)).unwrap();
        assert!(pass.probs().unwrap().iter().all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn probs_normalized_on_random_models() {
        let mut rng = SplitMix64::new(2);
        for seed in 0..100 {
            let m = ModelCheckpoint::init(ModelSpec::classifier(vec![10, 7, 5]), seed).unwrap();
            let pass = m.forward(&batch(&mut rng, 4, 10)).unwrap();
            for row in pass.probs().unwrap().chunks(5) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
            assert!(pass.logits().iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn scaling_top_layer_keeps_argmax() {
        let mut rng = SplitMix64::new(3);
        let m = ModelCheckpoint::init(ModelSpec::classifier(vec![10, 7, 5]), 4).unwrap();
        let mut doubled = m.clone();
        let top = doubled.layers.last_mut().unwrap();
        top.weight.data_mut().iter_mut().for_each(|w| *w *= 2.0);
        top.bias.data_mut().iter_mut().for_each(|b| *b *= 2.0);
        let x = batch(&mut rng, 16, 10);
        let a = m.forward(&x).unwrap();
        let b = doubled.forward(&x).unwrap();
        for (ra, rb) in a.probs().unwrap().chunks(5).zip(b.probs().unwrap().chunks(5)) {
            assert_eq!(argmax(ra), argmax(rb));
        }
    }

    #[test]
    fn taps_have_expected_widths() {
        let m = ModelCheckpoint::init(ModelSpec::classifier(vec![10, 7, 6, 5]), 4).unwrap();
        let mut rng = SplitMix64::new(4);
        let pass = m.forward(&batch(&mut rng, 2, 10)).unwrap();
        assert_eq!(pass.tap(TAP_TOP).unwrap().1, 5);
        let (pen, w) = pass.tap(TAP_PENULTIMATE).unwrap();
        assert_eq!((pen.len(), w), (12, 6));
        assert!(pass.tap("fc6").is_none());
    }

    #[test]
    fn dim_mismatch_is_shape_error() {
        let m = ModelCheckpoint::init(ModelSpec::classifier(vec![10, 5]), 0).unwrap();
        let x = Tensor::matrix(2, 9, vec![0.0; 18]).unwrap();
        assert!(matches!(m.forward(&x), Err(Error::Shape(_))));
    }

    #[test]
    fn duplicated_batch_same_mean_gradient() {
        let mut rng = SplitMix64::new(5);
        let m = ModelCheckpoint::init(ModelSpec::classifier(vec![6, 5, 3]), 6).unwrap();
        let x = batch(&mut rng, 4, 6);
        let labels = [0usize, 2, 1, 1];
        let mut x2 = x.data().to_vec();
        x2.extend_from_slice(x.data());
        let labels2: Vec<usize> = labels.iter().chain(&labels).copied().collect();
        let grad = |xs: &[f64], ys: &[usize]| {
            let p = m.forward_from(0, ys.len(), xs).unwrap();
            let d = softmax_nll_grad(p.probs().unwrap(), 3, ys);
            assert!(nll_loss(p.probs().unwrap(), 3, ys) >= 0.0);
            m.backward(&p, &d, false).unwrap()
        };
        let g1 = grad(x.data(), &labels);
        let g2 = grad(&x2, &labels2);
        for (a, b) in g1.layers.iter().zip(&g2.layers) {
            let (a, b) = (a.as_ref().unwrap(), b.as_ref().unwrap());
            for (u, v) in a.weight.iter().chain(&a.bias).zip(b.weight.iter().chain(&b.bias)) {
                assert!((u - v).abs() <= 1e-14 * u.abs().max(1.0));
            }
        }
    }

    #[test]
    fn frozen_layers_have_no_gradient() {
        let spec = ModelSpec::classifier(vec![6, 5, 4, 3]).with_trainable_top(2);
        let m = ModelCheckpoint::init(spec, 7).unwrap();
        let mut rng = SplitMix64::new(7);
        let p = m.forward(&batch(&mut rng, 2, 6)).unwrap();
        let d = softmax_nll_grad(p.probs().unwrap(), 3, &[0, 1]);
        let g = m.backward(&p, &d, false).unwrap();
        assert!(g.layers[0].is_none());
        assert!(g.layers[1].is_some() && g.layers[2].is_some());
        let gi = m.backward(&p, &d, true).unwrap();
        assert_eq!(gi.input.unwrap().len(), 12);
    }
}
