//! Activation maximization through a frozen generator.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bank::{BankEntry, OccluderBank, OccluderKind};
use crate::error::{Error, Result};
use crate::netcore::input::{plane_to_raster, INPUT_SIDE};
use crate::netcore::ModelCheckpoint;
use crate::raster::{Raster, TransparencyRule};
use crate::rng::{purpose, SplitMix64};

/// Minimum share of pixels above the key threshold for a usable occluder.
pub const MIN_OPAQUE_SHARE: f64 = 0.05;
/// Extra attempts with fresh seeds before an occluder is flagged degenerate.
pub const MAX_RESEEDS: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmConfig {
    pub target_class: usize,
    pub iterations: usize,
    pub step: f64,
    pub backtrack: f64,
    pub lambda: f64,
    /// Step size below which the search is considered converged.
    pub min_step: f64,
    pub seed: u64,
}

impl Default for AmConfig {
    fn default() -> Self {
        Self {
            target_class: 0,
            iterations: 200,
            step: 0.05,
            backtrack: 0.5,
            lambda: 0.01,
            min_step: 1e-6,
            seed: 0,
        }
    }
}

impl AmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("AM needs at least one iteration".into()));
        }
        if !(self.step >= 0.0 && self.step.is_finite()) {
            return Err(Error::Config("AM step must be finite and non-negative".into()));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::Config("backtracking factor must lie in (0, 1)".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config("latent penalty must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmResult {
    pub raster: Raster,
    /// Generator output in `[0, 1]` before keying.
    pub image: Vec<f64>,
    pub latent: Vec<f64>,
    pub initial_objective: f64,
    /// Objective after each iteration.
    pub trace: Vec<f64>,
    pub converged: bool,
}

impl AmResult {
    pub fn final_objective(&self) -> f64 {
        self.trace.last().copied().unwrap_or(self.initial_objective)
    }
}

struct Problem<'a> {
    generator: &'a ModelCheckpoint,
    classifier: &'a ModelCheckpoint,
    class: usize,
    lambda: f64,
}

impl Problem<'_> {
    fn image(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(self.generator.forward_from(0, 1, z)?.output().to_vec())
    }

    fn objective(&self, z: &[f64]) -> Result<f64> {
        let mut x = self.image(z)?;
        x.iter_mut().for_each(|v| *v -= self.classifier.meta.input_mean);
        let logit = self.classifier.forward_from(0, 1, &x)?.logits()[self.class];
        let v = logit - self.lambda * z.iter().map(|a| a * a).sum::<f64>();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numerics("AM objective is not finite".into()))
        }
    }

    fn gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
        let gen_pass = self.generator.forward_from(0, 1, z)?;
        let mut x = gen_pass.output().to_vec();
        x.iter_mut().for_each(|v| *v -= self.classifier.meta.input_mean);
        let cls_pass = self.classifier.forward_from(0, 1, &x)?;
        let mut seed = vec![0.0; self.classifier.num_classes()];
        seed[self.class] = 1.0;
        let dx = self.classifier.backward(&cls_pass, &seed, true)?.input.expect("input gradient");
        let dz = self.generator.backward(&gen_pass, &dx, true)?.input.expect("input gradient");
        Ok(dz.iter().zip(z).map(|(g, a)| g - 2.0 * self.lambda * a).collect())
    }
}

/// Gradient ascent on the latent code with backtracking: a step is taken
/// only if it does not lower the objective, otherwise the step is halved.
pub fn synthesize_occluder(generator: &ModelCheckpoint, classifier: &ModelCheckpoint, am: &AmConfig) -> Result<AmResult> {
    am.validate()?;
    let latent = generator.spec.input_width();
    if generator.spec.output_width() != classifier.spec.input_width() {
        return Err(Error::Shape(format!(
            "generator emits {} values, classifier takes {}",
            generator.spec.output_width(),
            classifier.spec.input_width()
        )));
    }
    if am.target_class >= classifier.num_classes() {
        return Err(Error::Config(format!("target class {} out of range", am.target_class)));
    }
    let problem = Problem {
        generator,
        classifier,
        class: am.target_class,
        lambda: am.lambda,
    };
    let mut rng = SplitMix64::derived(am.seed, am.target_class as u64, purpose::ACTIVATION_MAX);
    let mut z: Vec<f64> = (0..latent).map(|_| rng.normal()).collect();
    let initial = problem.objective(&z)?;
    let mut current = initial;
    let mut step = am.step;
    let mut trace = Vec::with_capacity(am.iterations);
    let mut converged = false;
    for _ in 0..am.iterations {
        let g = problem.gradient(&z)?;
        let accepted = loop {
            let cand: Vec<f64> = z.iter().zip(&g).map(|(a, d)| a + step * d).collect();
            let value = problem.objective(&cand)?;
            if value >= current {
                break Some((cand, value));
            }
            step *= am.backtrack;
            if step < am.min_step {
                break None;
            }
        };
        match accepted {
            Some((cand, value)) => {
                z = cand;
                current = value;
                trace.push(current);
            }
            None => {
                converged = true;
                break;
            }
        }
    }
    let image = problem.image(&z)?;
    Ok(AmResult {
        raster: plane_to_raster(&image, INPUT_SIDE),
        image,
        latent: z,
        initial_objective: initial,
        trace,
        converged,
    })
}

/// Share of pixels that survive the default key rule.
pub fn opaque_share(r: &Raster) -> f64 {
    let rule = TransparencyRule::default();
    let total = (r.width() * r.height()) as usize;
    let opaque = r.data().chunks_exact(3).filter(|p| !rule.is_transparent(p)).count();
    opaque as f64 / total as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankConfig {
    pub per_class: usize,
    pub out_of_domain: usize,
    /// Side of the rendered out-of-domain cutouts.
    pub out_of_domain_size: u32,
    pub am: AmConfig,
    pub seed: u64,
}

impl Default for BankConfig {
    fn default() -> Self {
        Self {
            per_class: 20,
            out_of_domain: 1000,
            out_of_domain_size: 48,
            am: AmConfig::default(),
            seed: 0,
        }
    }
}

/// `per_class` AM occluders for every class of `classifier`, followed by
/// the procedural out-of-domain entries.
pub fn build_bank(generator: &ModelCheckpoint, classifier: &ModelCheckpoint, config: &BankConfig) -> Result<OccluderBank> {
    let classes = classifier.num_classes();
    let jobs: Vec<(usize, usize)> = (0..classes).flat_map(|c| (0..config.per_class).map(move |k| (c, k))).collect();
    let entries = jobs
        .par_iter()
        .map(|&(class, k)| {
            let mut last = None;
            for retry in 0..=MAX_RESEEDS {
                let seed_index = k as u64 * (MAX_RESEEDS + 1) + retry;
                let am = AmConfig {
                    target_class: class,
                    seed: crate::rng::derive_seed(config.seed, seed_index, purpose::ACTIVATION_MAX),
                    ..config.am.clone()
                };
                let res = synthesize_occluder(generator, classifier, &am)
                    .map_err(|e| e.context(format!("class {class}, seed index {seed_index}")))?;
                let ok = opaque_share(&res.raster) >= MIN_OPAQUE_SHARE;
                let final_activation = Some(res.final_objective());
                last = Some(BankEntry {
                    id: format!("ind{class:02}_{k:03}"),
                    kind: OccluderKind::InDomain { class_id: class },
                    raster: res.raster,
                    seed: seed_index,
                    final_activation,
                    degenerate: !ok,
                });
                if ok {
                    break;
                }
            }
            let entry = last.expect("at least one attempt");
            if entry.degenerate {
                log::warn!("occluder {} stayed degenerate after {MAX_RESEEDS} reseeds", entry.id);
            }
            Ok(entry)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut bank = OccluderBank { entries };
    bank.extend(super::bank::render_out_of_domain(
        config.out_of_domain,
        config.out_of_domain_size,
        config.seed,
    ));
    Ok(bank)
}
