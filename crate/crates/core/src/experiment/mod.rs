//! End-to-end reproduction run: corpus, pretraining, occluder bank,
//! variant fine-tuning, grid evaluation and analyses, with every artifact
//! written under one output directory and a per-criterion summary.

pub mod checks;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::analysis::{
    extract_features, heatmap, pca_csv, pca_fit, pca_project, separability, separability_csv, Confidence,
    SeparabilityRow,
};
use crate::corpus::{crop_corpus, generate_glyph_corpus, split, write_manifest, write_split, CorpusConfig, LabeledSample};
use crate::error::{Error, Result};
use crate::imagination::{build_bank, synthesize_occluder, train_generator, write_bank, AmConfig, BankConfig, GeneratorConfig};
use crate::netcore::checkpoint::encode;
use crate::netcore::input::stack_inputs;
use crate::netcore::{write_checkpoint, ModelCheckpoint, ModelSpec, TrainConfig, TAP_TOP as TAP};
use crate::occlusion::{
    generate_imagined_dataset, write_dataset, AssignmentMode, ComposeOptions, Grid, OcclusionType,
};
use crate::protocol::{
    evaluate_grid_draws, finetune, per_class_delta, pretrain, pretrain_profile, AccuracyTable, Batch, Recipe, TrainingCurve,
    VariantSpec,
};
use crate::raster::{mean_color, Color, Raster};
use crate::rng::{derive_seed, purpose};

/// Sample counts for the self-contained property checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSizes {
    pub feature_sets: usize,
    pub gradient_models: usize,
    pub geometry_draws: usize,
    pub codec_rasters: usize,
}

impl Default for CheckSizes {
    fn default() -> Self {
        Self {
            feature_sets: 200,
            gradient_models: 20,
            geometry_draws: 1000,
            codec_rasters: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub classes: usize,
    pub per_class: usize,
    pub image_size: u32,
    pub ratios: [u32; 3],
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    pub generator: GeneratorConfig,
    pub bank: BankConfig,
    pub variants: Vec<String>,
    pub eval_types: Vec<OcclusionType>,
    pub eval_levels: Vec<u32>,
    /// Independent compositions pooled per test cell.
    pub eval_draws: usize,
    pub separability_levels: Vec<u32>,
    pub diagonal_levels: Vec<u32>,
    pub am_runs: usize,
    pub heatmap_samples: usize,
    pub heatmap_level: u32,
    pub heatmap_stride: Option<u32>,
    pub checks: CheckSizes,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ExperimentConfig {
    /// Ten classes of 500 glyphs, tuned to finish in a few minutes on one core.
    pub fn desk() -> Self {
        let seed = 7;
        let diagonal = vec![20, 40, 60, 80];
        let mut variants = vec!["baseline".to_string(), "imagination".to_string()];
        variants.extend(diagonal.iter().map(|x| format!("img-rect-{x}")));
        Self {
            seed,
            classes: 10,
            per_class: 500,
            image_size: 64,
            ratios: [3, 1, 1],
            pretrain: TrainConfig {
                base_lr: 0.01,
                max_iters: 1500,
                lr_drop_every: 1000,
                ..pretrain_profile()
            },
            finetune: TrainConfig::desk(),
            generator: GeneratorConfig {
                epochs: 30,
                ..GeneratorConfig::default()
            },
            bank: BankConfig::default(),
            variants,
            eval_types: OcclusionType::ALL.to_vec(),
            eval_levels: Grid::stepped_levels(10),
            eval_draws: 5,
            separability_levels: vec![40, 50, 60, 70],
            diagonal_levels: diagonal,
            am_runs: 100,
            heatmap_samples: 10,
            heatmap_level: 60,
            heatmap_stride: None,
            checks: CheckSizes::default(),
        }
    }

    /// A few seconds end to end; numbers are meaningless, artifacts are not.
    pub fn smoke() -> Self {
        let tiny = |iters| TrainConfig {
            batch_size: 16,
            max_iters: iters,
            lr_drop_every: 1000,
            ..pretrain_profile()
        };
        Self {
            classes: 3,
            per_class: 20,
            image_size: 32,
            pretrain: tiny(30),
            finetune: TrainConfig {
                base_lr: 0.001,
                ..tiny(20)
            },
            generator: GeneratorConfig {
                epochs: 2,
                ..GeneratorConfig::default()
            },
            bank: BankConfig {
                per_class: 2,
                out_of_domain: 6,
                out_of_domain_size: 32,
                am: AmConfig {
                    iterations: 10,
                    ..AmConfig::default()
                },
                seed: 0,
            },
            variants: vec!["baseline".into(), "imagination".into(), "img-rect-40".into()],
            eval_levels: vec![0, 40, 100],
            eval_draws: 1,
            separability_levels: vec![40],
            diagonal_levels: vec![40],
            am_runs: 4,
            heatmap_samples: 2,
            checks: CheckSizes {
                feature_sets: 10,
                gradient_models: 2,
                geometry_draws: 20,
                codec_rasters: 20,
            },
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.variants.is_empty() {
            return Err(Error::Config("variant list is empty".into()));
        }
        for v in &self.variants {
            VariantSpec::named(v, self.finetune.clone())?;
        }
        if self.eval_types.is_empty() || self.eval_levels.is_empty() || self.eval_draws == 0 {
            return Err(Error::Config("evaluation grid is empty".into()));
        }
        Grid::new(self.eval_types.clone(), self.eval_levels.clone()).validate()?;
        self.corpus().validate()?;
        self.pretrain.validate()?;
        self.finetune.validate()?;
        if self.ratios.contains(&0) {
            return Err(Error::Config(format!("split ratios {:?} must all be positive", self.ratios)));
        }
        if self.heatmap_level > 100 {
            return Err(Error::Config(format!("heat-map level {} above 100", self.heatmap_level)));
        }
        Ok(())
    }

    pub fn corpus(&self) -> CorpusConfig {
        CorpusConfig {
            classes: self.classes,
            per_class: self.per_class,
            image_size: self.image_size,
            seed: self.seed,
        }
    }

    /// Short digest stamped into every checkpoint's provenance.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(serde_json::to_vec(self).expect("config serializes"));
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub criterion: u32,
    pub name: String,
    pub pass: bool,
    pub metrics: Value,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Timing {
    pub phases: BTreeMap<String, f64>,
    pub total_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub criteria: Vec<CriterionResult>,
    pub timing: Timing,
}

impl RunSummary {
    pub fn get(&self, criterion: u32) -> Option<&CriterionResult> {
        self.criteria.iter().find(|c| c.criterion == criterion)
    }

    /// One line per criterion, then a `timing` line (the only part that
    /// varies between identical runs).
    pub fn to_ndjson(&self) -> String {
        let mut s = String::new();
        for c in &self.criteria {
            s.push_str(&serde_json::to_string(c).expect("criterion serializes"));
            s.push('\n');
        }
        s.push_str(&serde_json::to_string(&json!({ "timing": self.timing })).expect("timing serializes"));
        s.push('\n');
        s
    }
}

/// Drops the `timing` line from a summary file's contents.
pub fn strip_timing(summary: &str) -> String {
    summary
        .lines()
        .filter(|l| !l.starts_with("{\"timing\""))
        .map(|l| format!("{l}\n"))
        .collect()
}

struct Clock {
    start: Instant,
    last: Instant,
    timing: Timing,
}

impl Clock {
    fn new() -> Self {
        let now = Instant::now();
        Self {
            start: now,
            last: now,
            timing: Timing::default(),
        }
    }

    fn lap(&mut self, phase: &str) -> f64 {
        let now = Instant::now();
        let secs = now.duration_since(self.last).as_secs_f64();
        self.last = now;
        *self.timing.phases.entry(phase.to_string()).or_default() += secs;
        info!("{phase}: {secs:.1}s");
        secs
    }

    fn finish(mut self) -> Timing {
        self.timing.total_s = self.start.elapsed().as_secs_f64();
        self.timing
    }
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_curve(dir: &Path, name: &str, curve: &TrainingCurve) -> Result<()> {
    write_file(&dir.join(format!("{name}.csv")), curve.to_csv())?;
    if !curve.validation.is_empty() {
        write_file(&dir.join(format!("{name}_val.csv")), curve.validation_csv())?;
    }
    Ok(())
}

struct Trained {
    name: String,
    model: ModelCheckpoint,
}

/// Runs the full pipeline into `out` and writes `out/summary.ndjson`.
pub fn run(config: &ExperimentConfig, out: &Path) -> Result<RunSummary> {
    config.validate()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut clock = Clock::new();
    let seed = config.seed;
    let hash = config.hash();
    write_file(
        &out.join("config.json"),
        serde_json::to_string_pretty(config).expect("config serializes") + "\n",
    )?;

    let mut criteria = Vec::new();
    criteria.extend(property_checks(config, &mut clock));

    // Corpus and split.
    let corpus = generate_glyph_corpus(&config.corpus())?;
    write_manifest(&corpus, &out.join("corpus"))?;
    let sp = split(&corpus, config.ratios, seed)?;
    write_split(&sp, &out.join("corpus/split.json"))?;
    let cropped = crop_corpus(&corpus)?;
    let train = cropped.select(&sp.train)?;
    let val = cropped.select(&sp.val)?;
    let test = cropped.select(&sp.test)?;
    let gray = mean_color(train.iter().map(|s| &s.raster))?;
    clock.lap("corpus");

    // Pretraining on clean data, all layers.
    let pre_cfg = TrainConfig {
        seed,
        ..config.pretrain.clone()
    };
    let (mut pre, curve) = pretrain(ModelSpec::default_classifier(config.classes), &train, Some(&val), &pre_cfg)?;
    pre.meta.provenance.config_hash = hash.clone();
    let models_dir = out.join("models");
    let curves_dir = out.join("curves");
    fs::create_dir_all(&models_dir).map_err(|e| Error::io(&models_dir, e))?;
    write_checkpoint(&pre, &models_dir.join("pretrain.ofck"))?;
    write_curve(&curves_dir, "pretrain", &curve)?;
    clock.lap("pretrain");

    let ft_cfg = TrainConfig {
        seed,
        ..config.finetune.clone()
    };
    let clean = Batch::from_samples(&train, pre.meta.input_mean)?;
    let mut trained: Vec<Trained> = Vec::new();
    let tune = |name: &str, data: &Batch, clock: &mut Clock| -> Result<ModelCheckpoint> {
        let variant = VariantSpec::named(name, ft_cfg.clone())?;
        let (mut m, curve) = finetune(&pre, &variant, data, None)?;
        m.meta.provenance.config_hash = hash.clone();
        write_checkpoint(&m, &models_dir.join(format!("{name}.ofck")))?;
        write_curve(&curves_dir, name, &curve)?;
        clock.lap("finetune");
        Ok(m)
    };

    // The baseline doubles as the classifier the in-domain occluders are
    // synthesized against.
    if config.variants.iter().any(|v| v == "baseline") {
        let m = tune("baseline", &clean, &mut clock)?;
        trained.push(Trained {
            name: "baseline".into(),
            model: m,
        });
    }
    let am_target = trained.first().map(|t| t.model.clone()).unwrap_or_else(|| pre.clone());

    let raw = stack_inputs(&train.iter().map(|s| &s.raster).collect::<Vec<_>>());
    let (mut generator, gen_report) = train_generator(
        &raw,
        &GeneratorConfig {
            seed,
            ..config.generator.clone()
        },
    )?;
    generator.meta.provenance.config_hash = hash.clone();
    write_checkpoint(&generator, &models_dir.join("generator.ofck"))?;
    clock.lap("generator");

    let bank = build_bank(
        &generator,
        &am_target,
        &BankConfig {
            seed,
            ..config.bank.clone()
        },
    )?;
    write_bank(&bank, &out.join("bank"))?;
    clock.lap("bank");

    let options = ComposeOptions::default();
    for name in config.variants.iter().filter(|v| *v != "baseline") {
        let variant = VariantSpec::named(name, ft_cfg.clone())?;
        let data = match &variant.recipe {
            Recipe::Clean => clean.clone(),
            Recipe::Grid { grid, mode } => {
                let ds = generate_imagined_dataset(&train, grid, &bank, gray, &options, seed, *mode)?;
                write_dataset(&ds, &out.join("datasets").join(name))?;
                let rasters: Vec<&Raster> = ds.samples.iter().map(|s| &s.raster).collect();
                Batch::from_rasters(&rasters, ds.samples.iter().map(|s| s.class_id).collect(), pre.meta.input_mean)?
            }
        };
        clock.lap("compose");
        let m = tune(name, &data, &mut clock)?;
        trained.push(Trained {
            name: name.clone(),
            model: m,
        });
    }

    // Accuracy over the evaluation grid for the pretrained net and every variant.
    let eval_seed = derive_seed(seed, 0, purpose::PLACEMENT);
    let grid = Grid::new(config.eval_types.clone(), config.eval_levels.clone());
    let mut names = vec!["pretrain".to_string()];
    names.extend(trained.iter().map(|t| t.name.clone()));
    let mut refs: Vec<&ModelCheckpoint> = vec![&pre];
    refs.extend(trained.iter().map(|t| &t.model));
    let tables = evaluate_grid_draws(&refs, &test, &grid, &bank, gray, &options, eval_seed, config.eval_draws)?;
    let reports = out.join("reports");
    for (name, table) in names.iter().zip(&tables) {
        write_file(&reports.join(format!("accuracy_{name}.csv")), table.to_csv())?;
        write_file(&reports.join(format!("accuracy_{name}.ndjson")), table.to_ndjson())?;
    }
    let table_of = |name: &str| names.iter().position(|n| n == name).map(|i| &tables[i]);
    clock.lap("evaluate");

    // Separability on the occlusion types that have a level ordering to compare.
    let j_kinds: Vec<OcclusionType> = config
        .eval_types
        .iter()
        .copied()
        .filter(|k| matches!(k, OcclusionType::GrayRect | OcclusionType::InDomain))
        .collect();
    let mut j_rows = Vec::new();
    for &kind in &j_kinds {
        for &level in &config.eval_levels {
            let ds = generate_imagined_dataset(
                &test,
                &Grid::single(kind, level),
                &bank,
                gray,
                &options,
                eval_seed,
                AssignmentMode::CrossProduct,
            )?;
            let rasters: Vec<&Raster> = ds.samples.iter().map(|s| &s.raster).collect();
            let labels: Vec<usize> = ds.samples.iter().map(|s| s.class_id).collect();
            for (name, model) in names.iter().zip(&refs) {
                let batch = Batch::from_rasters(&rasters, labels.clone(), model.meta.input_mean)?;
                match extract_features(model, &batch, TAP).and_then(|fs| separability(&fs)) {
                    Ok(report) => j_rows.push(SeparabilityRow {
                        variant: name.clone(),
                        kind,
                        level,
                        report,
                    }),
                    Err(e) => warn!("separability {name} {kind} {level}: {e}"),
                }
            }
        }
    }
    write_file(&reports.join("separability.csv"), separability_csv(&j_rows))?;
    clock.lap("separability");

    // Per-class gains and the shared-basis projection of the most improved classes.
    let pca_metrics = match (table_of("baseline"), table_of("imagination")) {
        (Some(a), Some(b)) => pca_study(config, a, b, &names, &refs, &test, &bank, gray, eval_seed, &reports)?,
        _ => json!({ "skipped": "needs baseline and imagination" }),
    };
    clock.lap("pca");

    let heat = heatmap_study(config, &am_target, &test, gray, &out.join("heatmaps"))?;
    clock.lap("heatmap");

    // Activation-maximization properties against the synthesis classifier.
    let am = am_study(config, &generator, &am_target)?;
    clock.lap("am");

    let probe = determinism_probe(config, &pre, &clean)?;
    clock.lap("determinism");

    criteria.push(table_pattern(config, table_of("baseline"), table_of("imagination")));
    criteria.push(separability_pattern(config, &j_rows));
    criteria.push(diagonal(config, &names, &tables));
    criteria.push(chance_floor(config, &names, &tables));
    criteria.push(am);
    criteria.push(CriterionResult {
        criterion: 9,
        name: "determinism".into(),
        pass: probe,
        metrics: json!({ "rerun_identical": probe, "artifact_digest": tree_digest(out, &["summary.ndjson"])? }),
    });
    criteria.sort_by_key(|c| c.criterion);
    info!(
        "generator mse {:.4} (constant image {:.4}); pca {pca_metrics}; heatmap {heat}",
        gen_report.final_mse, gen_report.constant_mse
    );
    write_file(
        &reports.join("extras.json"),
        serde_json::to_string_pretty(&json!({
            "generator": { "final_mse": gen_report.final_mse, "constant_mse": gen_report.constant_mse, "iterations": gen_report.iterations },
            "pca": pca_metrics,
            "heatmap": heat,
            "bank_degenerate": bank.entries.iter().filter(|e| e.degenerate).count(),
        }))
        .expect("json")
            + "\n",
    )?;

    let timing = clock.finish();
    let summary = RunSummary {
        criteria: apply_runtime_bounds(&criteria, &timing),
        timing,
    };
    write_file(&out.join("summary.ndjson"), summary.to_ndjson())?;
    Ok(summary)
}

/// Folds the wall-clock limits into the pass flags. Limits only bind at
/// full check sizes and the full corpus.
fn apply_runtime_bounds(criteria: &[CriterionResult], timing: &Timing) -> Vec<CriterionResult> {
    let phase = |p: &str| timing.phases.get(p).copied().unwrap_or(0.0);
    let pipeline: f64 = ["corpus", "pretrain", "finetune", "generator", "bank", "compose", "evaluate"]
        .iter()
        .map(|p| phase(p))
        .sum();
    criteria
        .iter()
        .map(|c| {
            let limit = match c.criterion {
                1 => Some((phase("check_separability"), 5.0)),
                2 => Some((phase("check_gradients"), 30.0)),
                3 => Some((phase("check_geometry"), 10.0)),
                4 => Some((pipeline, 900.0)),
                _ => None,
            };
            let mut c = c.clone();
            if let Some((secs, max)) = limit {
                c.pass &= secs < max;
            }
            c
        })
        .collect()
}

fn property_checks(config: &ExperimentConfig, clock: &mut Clock) -> Vec<CriterionResult> {
    let seed = derive_seed(config.seed, 0, purpose::VERIFY);
    let sizes = &config.checks;
    let mut out = Vec::new();
    let mut push = |criterion, name: &str, o: checks::CheckOutcome| {
        out.push(CriterionResult {
            criterion,
            name: name.into(),
            pass: o.pass,
            metrics: serde_json::to_value(&o).expect("outcome serializes"),
        })
    };
    push(1, "separability oracle", checks::separability_oracle(seed, sizes.feature_sets));
    clock.lap("check_separability");
    push(2, "gradient check", checks::gradient_models(seed, sizes.gradient_models));
    clock.lap("check_gradients");
    push(3, "compositor geometry", checks::compositor_geometry(seed, sizes.geometry_draws));
    clock.lap("check_geometry");
    push(10, "pixmap codec", checks::codec_round_trip(seed, sizes.codec_rasters));
    clock.lap("check_codec");
    out
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// Criterion 4 on the rectangle and in-domain grids.
fn table_pattern(config: &ExperimentConfig, base: Option<&AccuracyTable>, imag: Option<&AccuracyTable>) -> CriterionResult {
    let fail = |why: &str| CriterionResult {
        criterion: 4,
        name: "accuracy pattern".into(),
        pass: false,
        metrics: json!({ "missing": why }),
    };
    let (Some(base), Some(imag)) = (base, imag) else {
        return fail("baseline and imagination variants");
    };
    let kinds = [OcclusionType::GrayRect, OcclusionType::InDomain];
    let clean_base = base.top1(OcclusionType::GrayRect, 0).or_else(|| base.top1(OcclusionType::InDomain, 0));
    let clean_imag = imag.top1(OcclusionType::GrayRect, 0).or_else(|| imag.top1(OcclusionType::InDomain, 0));
    let (Some(cb), Some(ci)) = (clean_base, clean_imag) else {
        return fail("level 0 on the rect or indomain grid");
    };
    let a = cb >= ci;
    let mut b = true;
    let mut c = true;
    let mut per_kind = serde_json::Map::new();
    for kind in kinds {
        let gains: Vec<(u32, f64)> = [30, 40, 50]
            .iter()
            .filter_map(|&l| Some((l, imag.top1(kind, l)? - base.top1(kind, l)?)))
            .collect();
        let best = gains.iter().map(|g| g.1).fold(f64::NEG_INFINITY, f64::max);
        b &= best >= 0.10;
        let mut levels: Vec<u32> = config.eval_levels.clone();
        levels.sort_unstable();
        let curve: Vec<f64> = levels.iter().filter_map(|&l| base.top1(kind, l)).collect();
        let mut running_min = f64::INFINITY;
        let mut worst_rise = 0.0f64;
        for &acc in &curve {
            if running_min.is_finite() {
                worst_rise = worst_rise.max(acc - running_min);
            }
            running_min = running_min.min(acc);
        }
        c &= worst_rise <= 0.03 && !curve.is_empty();
        per_kind.insert(
            kind.token().into(),
            json!({
                "gain": gains.iter().map(|(l, g)| json!({ "level": l, "gain": round3(*g) })).collect::<Vec<_>>(),
                "best_gain": round3(best),
                "baseline_max_rise": round3(worst_rise),
            }),
        );
    }
    CriterionResult {
        criterion: 4,
        name: "accuracy pattern".into(),
        pass: a && b && c,
        metrics: json!({
            "clean_baseline": cb,
            "clean_imagination": ci,
            "a_baseline_clean_ge": a,
            "b_gain_ge_0.10": b,
            "c_baseline_non_increasing": c,
            "by_type": per_kind,
        }),
    }
}

/// Criterion 5 on the in-domain grid.
fn separability_pattern(config: &ExperimentConfig, rows: &[SeparabilityRow]) -> CriterionResult {
    let j = |variant: &str, level: u32| {
        rows.iter()
            .find(|r| r.variant == variant && r.kind == OcclusionType::InDomain && r.level == level)
            .map(|r| r.report.j)
    };
    let mut pass = !config.separability_levels.is_empty();
    let mut levels = Vec::new();
    for &l in &config.separability_levels {
        match (j("baseline", l), j("imagination", l)) {
            (Some(b), Some(i)) => {
                pass &= i > b;
                levels.push(json!({ "level": l, "baseline": b, "imagination": i }));
            }
            _ => {
                pass = false;
                levels.push(json!({ "level": l, "missing": true }));
            }
        }
    }
    CriterionResult {
        criterion: 5,
        name: "separability pattern".into(),
        pass,
        metrics: json!({ "type": "indomain", "levels": levels }),
    }
}

/// Criterion 6: each `img-rect-x` should win on rectangle level `x`.
fn diagonal(config: &ExperimentConfig, names: &[String], tables: &[AccuracyTable]) -> CriterionResult {
    let mut wins = 0;
    let mut rows = Vec::new();
    let contenders: Vec<(u32, Option<&AccuracyTable>)> = config
        .diagonal_levels
        .iter()
        .map(|&x| (x, names.iter().position(|n| *n == format!("img-rect-{x}")).map(|i| &tables[i])))
        .collect();
    let complete = contenders.iter().all(|c| c.1.is_some());
    for &(x, _) in &contenders {
        let accs: Vec<Option<f64>> = contenders
            .iter()
            .map(|(_, t)| t.and_then(|t| t.top1(OcclusionType::GrayRect, x)))
            .collect();
        let own = contenders.iter().position(|c| c.0 == x).expect("own level");
        let best = accs
            .iter()
            .enumerate()
            .filter_map(|(i, a)| a.map(|a| (i, a)))
            .fold(None::<(usize, f64)>, |acc, (i, a)| match acc {
                Some((_, b)) if b >= a => acc,
                _ => Some((i, a)),
            });
        let won = complete && best.map(|b| b.0) == Some(own);
        wins += usize::from(won);
        rows.push(json!({ "level": x, "accuracies": accs, "winner_is_own": won }));
    }
    let needed = (contenders.len() * 3).div_ceil(4);
    CriterionResult {
        criterion: 6,
        name: "diagonal dominance".into(),
        pass: complete && !contenders.is_empty() && wins >= needed,
        metrics: json!({ "wins": wins, "needed": needed, "levels": rows }),
    }
}

/// Criterion 7: every checkpoint near chance on fully covered rectangles.
fn chance_floor(config: &ExperimentConfig, names: &[String], tables: &[AccuracyTable]) -> CriterionResult {
    let chance = 1.0 / config.classes as f64;
    let mut pass = true;
    let mut per = serde_json::Map::new();
    for (name, t) in names.iter().zip(tables) {
        match t.top1(OcclusionType::GrayRect, 100) {
            Some(a) => {
                pass &= (a - chance).abs() <= 0.05;
                per.insert(name.clone(), json!(a));
            }
            None => {
                pass = false;
                per.insert(name.clone(), Value::Null);
            }
        }
    }
    CriterionResult {
        criterion: 7,
        name: "chance floor".into(),
        pass,
        metrics: json!({ "chance": chance, "top1_rect_100": per }),
    }
}

fn am_study(config: &ExperimentConfig, generator: &ModelCheckpoint, classifier: &ModelCheckpoint) -> Result<CriterionResult> {
    let before = (encode(generator).ok(), encode(classifier).ok());
    let mut monotone = true;
    let mut doubled = 0;
    for run in 0..config.am_runs {
        let am = AmConfig {
            target_class: run % config.classes,
            seed: derive_seed(config.seed, run as u64, purpose::VERIFY),
            ..config.bank.am.clone()
        };
        let r = synthesize_occluder(generator, classifier, &am)?;
        let mut prev = r.initial_objective;
        for &v in &r.trace {
            monotone &= v >= prev;
            prev = v;
        }
        doubled += usize::from(r.final_objective() >= 2.0 * r.initial_objective);
    }
    let untouched = before.0.is_some() && before == (encode(generator).ok(), encode(classifier).ok());
    let share = doubled as f64 / config.am_runs.max(1) as f64;
    Ok(CriterionResult {
        criterion: 8,
        name: "activation maximization".into(),
        pass: monotone && untouched && share >= 0.8 && config.am_runs > 0,
        metrics: json!({
            "runs": config.am_runs,
            "monotone": monotone,
            "doubled": doubled,
            "share_doubled": share,
            "checkpoints_untouched": untouched,
        }),
    })
}

#[allow(clippy::too_many_arguments)]
fn pca_study(
    config: &ExperimentConfig,
    base: &AccuracyTable,
    imag: &AccuracyTable,
    names: &[String],
    models: &[&ModelCheckpoint],
    test: &[&LabeledSample],
    bank: &crate::imagination::OccluderBank,
    gray: Color,
    eval_seed: u64,
    reports: &Path,
) -> Result<Value> {
    let kind = if config.eval_types.contains(&OcclusionType::InDomain) {
        OcclusionType::InDomain
    } else {
        config.eval_types[0]
    };
    // The level in 30..=50 where imagination gains most picks the classes.
    let pick_level = [30, 40, 50]
        .into_iter()
        .filter_map(|l| Some((l, imag.top1(kind, l)? - base.top1(kind, l)?)))
        .fold(None::<(u32, f64)>, |acc, (l, g)| match acc {
            Some((_, b)) if b >= g => acc,
            _ => Some((l, g)),
        })
        .map(|p| p.0)
        .unwrap_or(config.eval_levels[config.eval_levels.len() / 2]);
    let mut deltas = per_class_delta(base, imag, kind, pick_level)?;
    let mut csv = String::from("type,level,class,acc_baseline,delta\n");
    for d in &deltas {
        csv.push_str(&format!("{kind},{pick_level},{},{},{}\n", d.class, d.acc_a, d.delta));
    }
    write_file(&reports.join("per_class_delta.csv"), csv)?;
    deltas.sort_by(|a, b| b.delta.total_cmp(&a.delta).then(a.class.cmp(&b.class)));
    let mut chosen: Vec<usize> = deltas.iter().take(5).map(|d| d.class).collect();
    chosen.sort_unstable();
    let keep: Vec<&LabeledSample> = test.iter().copied().filter(|s| chosen.contains(&s.class_id)).collect();

    let mut levels = config.eval_levels.clone();
    levels.sort_unstable();
    let mut explained = serde_json::Map::new();
    for name in ["baseline", "imagination"] {
        let Some(i) = names.iter().position(|n| n == name) else { continue };
        let model = models[i];
        let features = |level: u32| -> Result<(Vec<f64>, Vec<usize>, usize)> {
            let ds = generate_imagined_dataset(
                &keep,
                &Grid::single(kind, level),
                bank,
                gray,
                &ComposeOptions::default(),
                eval_seed,
                AssignmentMode::CrossProduct,
            )?;
            let rasters: Vec<&Raster> = ds.samples.iter().map(|s| &s.raster).collect();
            let labels: Vec<usize> = ds.samples.iter().map(|s| s.class_id).collect();
            let batch = Batch::from_rasters(&rasters, labels.clone(), model.meta.input_mean)?;
            let pass = model.forward_from(0, batch.len(), &batch.inputs)?;
            let (rows, width) = pass.tap(TAP).expect("top tap exists");
            Ok((rows.to_vec(), labels, width))
        };
        let (rows0, _, width) = features(0)?;
        let proj = pca_fit(&rows0, width, 2)?;
        let mut points = Vec::new();
        for &level in &levels {
            let (rows, labels, _) = if level == 0 { (rows0.clone(), keep.iter().map(|s| s.class_id).collect(), width) } else { features(level)? };
            for (coords, class) in pca_project(&proj, &rows)?.into_iter().zip(labels) {
                points.push((class, level, coords));
            }
        }
        write_file(&reports.join(format!("pca_{name}.csv")), pca_csv(&points))?;
        explained.insert(name.into(), json!(proj.explained));
    }
    Ok(json!({ "type": kind.token(), "level": pick_level, "classes": chosen, "explained": explained }))
}

fn heatmap_study(config: &ExperimentConfig, model: &ModelCheckpoint, test: &[&LabeledSample], gray: Color, dir: &Path) -> Result<Value> {
    let mut lines = String::new();
    let mut below = 0;
    let take = config.heatmap_samples.min(test.len());
    for s in test.iter().take(take) {
        let h = heatmap(model, s, config.heatmap_level, config.heatmap_stride, gray, Confidence::Probability)?;
        below += usize::from(h.mean() <= h.unoccluded + 0.05);
        let mut row = serde_json::to_value(&h).expect("heat map serializes");
        row["id"] = json!(s.id);
        lines.push_str(&row.to_string());
        lines.push('\n');
        write_file(&dir.join(format!("{}.pgm", s.id)), h.to_pgm())?;
    }
    write_file(&dir.join("heatmaps.ndjson"), lines)?;
    Ok(json!({ "samples": take, "mean_le_unoccluded_plus_0.05": below }))
}

/// Repeats a short slice of the pipeline and compares bytes: corpus
/// rendering, a composed cell and a few fine-tuning steps.
fn determinism_probe(config: &ExperimentConfig, pre: &ModelCheckpoint, clean: &Batch) -> Result<bool> {
    let small = CorpusConfig {
        per_class: 10,
        ..config.corpus()
    };
    let a = generate_glyph_corpus(&small)?;
    let b = generate_glyph_corpus(&small)?;
    let same_corpus = a == b;
    let ft = TrainConfig {
        max_iters: 5,
        seed: config.seed,
        ..config.finetune.clone()
    };
    let v = VariantSpec::named("baseline", ft)?;
    let (m1, _) = finetune(pre, &v, clean, None)?;
    let (m2, _) = finetune(pre, &v, clean, None)?;
    Ok(same_corpus && encode(&m1)? == encode(&m2)?)
}

/// SHA-256 over every file under `root` (relative path and contents, in
/// sorted order), skipping the named top-level files.
pub fn tree_digest(root: &Path, skip: &[&str]) -> Result<String> {
    let mut files = Vec::new();
    collect_files(root, root, &mut files)?;
    files.sort();
    let mut h = Sha256::new();
    for rel in files {
        if skip.iter().any(|s| Path::new(s) == rel) {
            continue;
        }
        let path = root.join(&rel);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        h.update(rel.to_string_lossy().as_bytes());
        h.update([0]);
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Relative paths of all regular files under `dir`.
pub fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            out.push(path.strip_prefix(root).expect("under root").to_path_buf());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_variants_rejected() {
        let c = ExperimentConfig {
            variants: vec![],
            ..ExperimentConfig::smoke()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_variant_rejected() {
        let c = ExperimentConfig {
            variants: vec!["nope".into()],
            ..ExperimentConfig::smoke()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn strip_timing_keeps_criteria() {
        let s = "{\"criterion\":1}\n{\"timing\":{\"total_s\":1.0}}\n";
        assert_eq!(strip_timing(s), "{\"criterion\":1}\n");
    }

    #[test]
    fn smoke_run_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let summary = run(&ExperimentConfig::smoke(), dir.path()).unwrap();
        assert_eq!(summary.criteria.len(), 10);
        for f in [
            "summary.ndjson",
            "corpus/split.json",
            "models/pretrain.ofck",
            "models/baseline.ofck",
            "models/generator.ofck",
            "reports/separability.csv",
            "reports/accuracy_imagination.csv",
            "heatmaps/heatmaps.ndjson",
        ] {
            assert!(dir.path().join(f).exists(), "{f} missing");
        }
        assert!(summary.get(9).unwrap().pass);
    }
}
