//! Pretraining, label-preserving fine-tuning variants and evaluation.

pub mod eval;

pub use eval::{evaluate, evaluate_cell, evaluate_grid, evaluate_grid_draws, per_class_delta, top_k, AccuracyRow, AccuracyTable, ClassDelta};

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::LabeledSample;
use crate::error::{Error, Result};
use crate::netcore::input::{center, scalar_mean, stack_inputs, INPUT_WIDTH};
use crate::netcore::{fit, ModelCheckpoint, ModelSpec, Targets, TrainConfig};
use crate::occlusion::{AssignmentMode, Grid, OcclusionType};
use crate::raster::Raster;

/// Network inputs (centered) with their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Batch {
    /// Preprocesses rasters and subtracts `mean`.
    pub fn from_rasters<R: AsRef<Raster> + Sync>(rasters: &[R], labels: Vec<usize>, mean: f64) -> Result<Self> {
        if rasters.len() != labels.len() {
            return Err(Error::Shape("one label per raster required".into()));
        }
        let mut inputs = stack_inputs(rasters);
        center(&mut inputs, mean);
        Ok(Self { inputs, labels })
    }

    pub fn from_samples(samples: &[&LabeledSample], mean: f64) -> Result<Self> {
        let rasters: Vec<&Raster> = samples.iter().map(|s| &s.raster).collect();
        Self::from_rasters(&rasters, samples.iter().map(|s| s.class_id).collect(), mean)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Mean gray level of preprocessed samples.
pub fn input_mean(samples: &[&LabeledSample]) -> Result<f64> {
    let rasters: Vec<&Raster> = samples.iter().map(|s| &s.raster).collect();
    scalar_mean(&stack_inputs(&rasters))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iter: u64,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub points: Vec<CurvePoint>,
    /// `(iteration, top-1)` on the validation split.
    pub validation: Vec<(u64, f64)>,
}

impl TrainingCurve {
    /// `iter,loss,lr` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iter,loss,lr\n");
        for p in &self.points {
            let _ = writeln!(s, "{},{},{}", p.iter, p.loss, p.lr);
        }
        s
    }

    pub fn validation_csv(&self) -> String {
        let mut s = String::from("iter,top1\n");
        for (it, acc) in &self.validation {
            let _ = writeln!(s, "{it},{acc}");
        }
        s
    }
}

/// Defaults for training from scratch on the clean corpus.
pub fn pretrain_profile() -> TrainConfig {
    TrainConfig {
        batch_size: 64,
        momentum: 0.9,
        base_lr: 0.01,
        lr_drop_factor: 10.0,
        lr_drop_every: 2000,
        max_iters: 3000,
        weight_decay: 0.0005,
        seed: 0,
    }
}

fn train_with_curve(
    model: &mut ModelCheckpoint,
    data: &Batch,
    config: &TrainConfig,
    validation: Option<&Batch>,
) -> Result<TrainingCurve> {
    let mut curve = TrainingCurve::default();
    let every = (data.len().div_ceil(config.batch_size.max(1)) as u64).max(1);
    let mut val_err = None;
    fit(
        model,
        &data.inputs,
        data.len(),
        Targets::Labels(&data.labels),
        config,
        |iter, loss, m| {
            curve.points.push(CurvePoint {
                iter,
                loss,
                lr: config.lr(iter),
            });
            if let Some(v) = validation {
                if (iter + 1) % every == 0 || iter + 1 == config.max_iters {
                    match evaluate(m, v) {
                        Ok((top1, _)) => curve.validation.push((iter + 1, top1)),
                        Err(e) => val_err = Some(e),
                    }
                }
            }
        },
    )?;
    match val_err {
        Some(e) => Err(e),
        None => Ok(curve),
    }
}

/// Trains every layer of a fresh `spec` on clean samples. The training-set
/// mean gray level is stored in the checkpoint and subtracted from inputs.
pub fn pretrain(
    spec: ModelSpec,
    train: &[&LabeledSample],
    val: Option<&[&LabeledSample]>,
    config: &TrainConfig,
) -> Result<(ModelCheckpoint, TrainingCurve)> {
    if train.is_empty() {
        return Err(Error::EmptyInput("pretraining split is empty".into()));
    }
    let mut spec = spec;
    spec.freeze_mask.iter_mut().for_each(|f| *f = false);
    let mut model = ModelCheckpoint::init(spec, config.seed)?;
    let mean = input_mean(train)?;
    model.meta.input_mean = mean;
    model.meta.provenance.note = "pretrain".into();
    let data = Batch::from_samples(train, mean)?;
    let val = val.map(|v| Batch::from_samples(v, mean)).transpose()?;
    let curve = train_with_curve(&mut model, &data, config, val.as_ref())?;
    Ok((model, curve))
}

/// What a variant is fine-tuned on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Recipe {
    Clean,
    Grid { grid: Grid, mode: AssignmentMode },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSpec {
    pub name: String,
    pub recipe: Recipe,
    pub config: TrainConfig,
    /// Number of top layers that are trained; the rest stay frozen.
    pub trainable_top: usize,
}

pub const FULL_LEVELS_STEP: u32 = 10;

impl VariantSpec {
    /// Resolves `baseline`, `imagination`, `img-rect-<x>` and
    /// `img-<type>-all`.
    pub fn named(name: &str, config: TrainConfig) -> Result<Self> {
        let all_levels = Grid::stepped_levels(FULL_LEVELS_STEP);
        let recipe = match name {
            "baseline" => Recipe::Clean,
            "imagination" => Recipe::Grid {
                grid: Grid::new(OcclusionType::ALL.to_vec(), all_levels),
                mode: AssignmentMode::RoundRobin,
            },
            _ => {
                let rest = name
                    .strip_prefix("img-")
                    .ok_or_else(|| Error::Config(format!("unknown variant `{name}`")))?;
                let (kind, tail) = rest
                    .split_once('-')
                    .ok_or_else(|| Error::Config(format!("unknown variant `{name}`")))?;
                let kind = OcclusionType::from_str(kind)?;
                if tail == "all" {
                    Recipe::Grid {
                        grid: Grid::new(vec![kind], all_levels),
                        mode: AssignmentMode::RoundRobin,
                    }
                } else {
                    let level: u32 = tail
                        .parse()
                        .map_err(|_| Error::Config(format!("bad level in variant `{name}`")))?;
                    Recipe::Grid {
                        grid: Grid::single(kind, level),
                        mode: AssignmentMode::CrossProduct,
                    }
                }
            }
        };
        if let Recipe::Grid { grid, .. } = &recipe {
            grid.validate()?;
        }
        Ok(Self {
            name: name.to_string(),
            recipe,
            config,
            trainable_top: 2,
        })
    }
}

/// Fine-tunes a copy of `base` on `data`, keeping labels as given. Layers
/// below the top `trainable_top` are left bit-identical.
pub fn finetune(
    base: &ModelCheckpoint,
    variant: &VariantSpec,
    data: &Batch,
    validation: Option<&Batch>,
) -> Result<(ModelCheckpoint, TrainingCurve)> {
    if data.is_empty() {
        return Err(Error::EmptyInput(format!("no training data for variant `{}`", variant.name)));
    }
    if data.inputs.len() != data.len() * INPUT_WIDTH {
        return Err(Error::Shape("fine-tuning inputs are not 32x32".into()));
    }
    let mut model = base.clone();
    model.spec = model.spec.with_trainable_top(variant.trainable_top);
    model.meta.provenance.note = format!("finetune {}", variant.name);
    let curve = train_with_curve(&mut model, data, &variant.config, validation)?;
    Ok((model, curve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_glyph_corpus, CorpusConfig};
    use crate::netcore::checkpoint::encode;

    fn corpus() -> crate::corpus::CorpusManifest {
        generate_glyph_corpus(&CorpusConfig {
            classes: 3,
            per_class: 20,
            image_size: 32,
            seed: 1,
        })
        .unwrap()
    }

    fn small_cfg(iters: u64) -> TrainConfig {
        TrainConfig {
            max_iters: iters,
            batch_size: 16,
            ..pretrain_profile()
        }
    }

    #[test]
    fn zero_iterations_is_init() {
        let c = corpus();
        let s: Vec<_> = c.samples.iter().collect();
        let spec = ModelSpec::classifier(vec![1024, 16, 8, 3]);
        let (m, curve) = pretrain(spec.clone(), &s, None, &small_cfg(0)).unwrap();
        assert!(curve.points.is_empty());
        assert_eq!(m.layers, ModelCheckpoint::init(spec, 0).unwrap().layers);
    }

    #[test]
    fn pretrain_deterministic_and_finetune_freezes() {
        let c = corpus();
        let s: Vec<_> = c.samples.iter().collect();
        let spec = ModelSpec::classifier(vec![1024, 16, 8, 3]);
        let (a, curve) = pretrain(spec.clone(), &s, Some(&s[..10]), &small_cfg(20)).unwrap();
        let (b, _) = pretrain(spec, &s, None, &small_cfg(20)).unwrap();
        assert_eq!(encode(&a).unwrap(), encode(&b).unwrap());
        assert_eq!(curve.points.len(), 20);
        assert!(!curve.validation.is_empty());

        let v = VariantSpec::named("baseline", small_cfg(10)).unwrap();
        let data = Batch::from_samples(&s, a.meta.input_mean).unwrap();
        let (ft, _) = finetune(&a, &v, &data, None).unwrap();
        assert_eq!(ft.layers[0], a.layers[0]);
        assert_ne!(ft.layers[2], a.layers[2]);

        let frozen = VariantSpec {
            trainable_top: 0,
            ..v
        };
        let (same, _) = finetune(&a, &frozen, &data, None).unwrap();
        assert_eq!(same.layers, a.layers);
    }

    #[test]
    fn variant_names() {
        let cfg = TrainConfig::desk();
        let v = VariantSpec::named("img-rect-40", cfg.clone()).unwrap();
        assert_eq!(
            v.recipe,
            Recipe::Grid {
                grid: Grid::single(OcclusionType::GrayRect, 40),
                mode: AssignmentMode::CrossProduct
            }
        );
        match VariantSpec::named("img-indomain-all", cfg.clone()).unwrap().recipe {
            Recipe::Grid { grid, mode } => {
                assert_eq!(grid.types, vec![OcclusionType::InDomain]);
                assert_eq!(grid.levels.len(), 11);
                assert_eq!(mode, AssignmentMode::RoundRobin);
            }
            r => panic!("{r:?}"),
        }
        match VariantSpec::named("imagination", cfg.clone()).unwrap().recipe {
            Recipe::Grid { grid, .. } => assert_eq!(grid.cells().len(), 33),
            r => panic!("{r:?}"),
        }
        assert!(VariantSpec::named("img-blur-10", cfg.clone()).is_err());
        assert!(VariantSpec::named("img-rect-140", cfg.clone()).is_err());
        assert!(VariantSpec::named("fancy", cfg).is_err());
    }

    #[test]
    fn curve_csv_header() {
        let c = TrainingCurve {
            points: vec![CurvePoint {
                iter: 0,
                loss: 1.5,
                lr: 0.1,
            }],
            validation: vec![],
        };
        assert_eq!(c.to_csv(), "iter,loss,lr\n0,1.5,0.1\n");
    }
}
