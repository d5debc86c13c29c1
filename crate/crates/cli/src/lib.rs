//! Command-line surface over the occlusion-forge pipeline.

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use occlusion_forge::analysis::{
    extract_features, heatmap, pca_csv, pca_fit, pca_project, separability, separability_csv, Confidence,
    SeparabilityRow,
};
use occlusion_forge::corpus::{
    crop_corpus, generate_glyph_corpus, ingest_external, read_manifest, read_split, split, write_manifest, write_split,
    CorpusConfig, CorpusManifest, LabeledSample, SplitManifest, SplitName,
};
use occlusion_forge::experiment::{self, ExperimentConfig};
use occlusion_forge::imagination::{build_bank, read_bank, train_generator, write_bank, BankConfig, GeneratorConfig};
use occlusion_forge::netcore::input::stack_inputs;
use occlusion_forge::netcore::{read_checkpoint, write_checkpoint, ModelCheckpoint, ModelSpec, TAP_PENULTIMATE, TAP_TOP};
use occlusion_forge::occlusion::{
    generate_imagined_dataset, read_dataset, write_dataset, AssignmentMode, ComposeOptions, Grid, OcclusionType,
};
use occlusion_forge::protocol::{evaluate_grid_draws, finetune, pretrain, pretrain_profile, Batch, Recipe, VariantSpec};
use occlusion_forge::raster::{mean_color, Color, Raster};
use occlusion_forge::{Error, Result};

use config::{parse_levels, parse_ratios, parse_types, profile, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// Exit code for a pipeline error.
pub fn exit_code(err: &Error) -> i32 {
    match err.root() {
        Error::Io { .. } | Error::Codec(_) | Error::Checkpoint(_) => EXIT_IO,
        Error::Training(_) | Error::Numerics(_) | Error::DegenerateIntraClass | Error::Rank { .. } => EXIT_NUMERIC,
        _ => EXIT_USAGE,
    }
}

#[derive(Debug, Parser)]
#[command(name = "occlusion-forge", version, about = "Occlusion composition, fine-tuning and robustness analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate, split or ingest a labeled corpus.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Compose an occluded dataset from one split.
    Compose(ComposeArgs),
    /// Pretrain a classifier or fine-tune a named variant.
    Train(TrainArgs),
    /// Train the image generator or build the occluder bank.
    #[command(subcommand)]
    Synth(SynthCmd),
    /// Score checkpoints over an occlusion grid.
    Eval(EvalArgs),
    /// Separability, projections and heat maps.
    #[command(subcommand)]
    Analyze(AnalyzeCmd),
    /// Run the whole pipeline and write a criterion summary.
    Repro(ReproArgs),
}

#[derive(Debug, Subcommand)]
pub enum CorpusCmd {
    Gen {
        #[arg(long, default_value_t = 10)]
        classes: usize,
        #[arg(long, default_value_t = 500)]
        per_class: usize,
        #[arg(long, default_value_t = 64)]
        size: u32,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "3:1:1")]
        ratios: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    Ingest {
        /// Directory the annotation paths are relative to.
        #[arg(long)]
        root: PathBuf,
        /// `path<TAB>class<TAB>x,y,w,h` per line.
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Where samples come from: a manifest plus a split file.
#[derive(Debug, Args, Clone)]
pub struct DataArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub split_file: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Fill value for gray rectangles; defaults to the training split's mean color.
    #[arg(long)]
    pub gray: Option<u8>,
}

#[derive(Debug, Args)]
pub struct ComposeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "rect,indomain,outdomain")]
    pub types: String,
    #[arg(long, default_value = "0:100:10")]
    pub levels: String,
    #[arg(long, default_value = "roundrobin")]
    pub mode: String,
    /// Occluder bank directory; required for indomain/outdomain.
    #[arg(long)]
    pub bank: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// `pretrain`, `baseline`, `imagination`, `img-rect-<x>` or `img-<type>-all`.
    #[arg(long)]
    pub variant: String,
    #[arg(long, default_value = "desk")]
    pub profile: String,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub split_file: PathBuf,
    /// Checkpoint to fine-tune from (all variants except `pretrain`).
    #[arg(long)]
    pub base: Option<PathBuf>,
    /// Composed dataset manifest for occlusion variants.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub iterations: Option<u64>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum SynthCmd {
    Generator {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        split_file: PathBuf,
        #[arg(long, default_value_t = 30)]
        epochs: u64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    Bank {
        #[arg(long)]
        generator: PathBuf,
        #[arg(long)]
        classifier: PathBuf,
        #[arg(long, default_value_t = 20)]
        per_class: usize,
        #[arg(long, default_value_t = 1000)]
        out_of_domain: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long = "model", required = true)]
    pub models: Vec<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub bank: Option<PathBuf>,
    #[arg(long, default_value = "rect,indomain,outdomain")]
    pub types: String,
    #[arg(long, default_value = "0:100:10")]
    pub levels: String,
    /// Independent compositions pooled per cell.
    #[arg(long, default_value_t = 1)]
    pub draws: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCmd {
    /// Separability score per model and grid cell.
    J {
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        bank: Option<PathBuf>,
        #[arg(long, default_value = "rect,indomain")]
        types: String,
        #[arg(long, default_value = "0:100:10")]
        levels: String,
        #[arg(long, default_value = TAP_TOP)]
        tap: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Two-component projection fit on the 0% level, applied to every level.
    Pca {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        bank: Option<PathBuf>,
        #[arg(long = "type", default_value = "indomain")]
        kind: String,
        #[arg(long, default_value = "0:100:10")]
        levels: String,
        /// Comma-separated class ids; all classes when omitted.
        #[arg(long)]
        classes: Option<String>,
        #[arg(long, default_value = TAP_TOP)]
        tap: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sliding gray-rectangle confidence maps.
    Heatmap {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 60)]
        level: u32,
        #[arg(long)]
        stride: Option<u32>,
        /// Number of samples from the start of the split.
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long)]
        logit: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ReproArgs {
    /// INI run configuration; desk defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn write_text(path: &Path, text: impl AsRef<[u8]>) -> Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(p).map_err(|e| Error::io(p, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn file_stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into())
}

struct Loaded {
    cropped: CorpusManifest,
    split: SplitManifest,
}

impl Loaded {
    fn open(manifest: &Path, split_file: &Path) -> Result<Self> {
        let m = read_manifest(manifest)?;
        Ok(Self {
            cropped: crop_corpus(&m)?,
            split: read_split(split_file)?,
        })
    }

    fn samples(&self, which: SplitName) -> Result<Vec<&LabeledSample>> {
        self.cropped.select(self.split.ids(which))
    }

    fn gray(&self, explicit: Option<u8>) -> Result<Color> {
        match explicit {
            Some(v) => Ok(Color::gray(v)),
            None => mean_color(self.samples(SplitName::Train)?.iter().map(|s| &s.raster)),
        }
    }
}

fn bank_or_empty(path: Option<&Path>) -> Result<occlusion_forge::imagination::OccluderBank> {
    match path {
        Some(p) => read_bank(p),
        None => Ok(Default::default()),
    }
}

fn models(paths: &[PathBuf]) -> Result<Vec<ModelCheckpoint>> {
    paths.iter().map(|p| read_checkpoint(p)).collect()
}

fn check_tap(tap: &str) -> Result<()> {
    if tap == TAP_TOP || tap == TAP_PENULTIMATE {
        Ok(())
    } else {
        Err(Error::Config(format!("unknown tap `{tap}`; valid: {TAP_TOP}, {TAP_PENULTIMATE}")))
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Corpus(c) => cmd_corpus(c),
        Command::Compose(a) => cmd_compose(a),
        Command::Train(a) => cmd_train(a),
        Command::Synth(c) => cmd_synth(c),
        Command::Eval(a) => cmd_eval(a),
        Command::Analyze(c) => cmd_analyze(c),
        Command::Repro(a) => cmd_repro(a).map(|_| ()),
    }
}

pub fn cmd_corpus(cmd: CorpusCmd) -> Result<()> {
    match cmd {
        CorpusCmd::Gen {
            classes,
            per_class,
            size,
            seed,
            out,
        } => {
            let m = generate_glyph_corpus(&CorpusConfig {
                classes,
                per_class,
                image_size: size,
                seed,
            })?;
            let path = write_manifest(&m, &out)?;
            println!("{}", path.display());
        }
        CorpusCmd::Split {
            manifest,
            ratios,
            seed,
            out,
        } => {
            let m = read_manifest(&manifest)?;
            let s = split(&m, parse_ratios(&ratios)?, seed)?;
            write_split(&s, &out)?;
            println!("train {} val {} test {}", s.train.len(), s.val.len(), s.test.len());
        }
        CorpusCmd::Ingest {
            root,
            annotations,
            out,
        } => {
            let m = ingest_external(&root, &annotations)?;
            let path = write_manifest(&m, &out)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

pub fn cmd_compose(a: ComposeArgs) -> Result<()> {
    let data = Loaded::open(&a.data.manifest, &a.data.split_file)?;
    let base = data.samples(a.data.split.parse()?)?;
    let grid = Grid::new(parse_types(&a.types)?, parse_levels(&a.levels)?);
    let mode: AssignmentMode = a.mode.parse()?;
    let bank = bank_or_empty(a.bank.as_deref())?;
    let gray = data.gray(a.data.gray)?;
    let ds = generate_imagined_dataset(&base, &grid, &bank, gray, &ComposeOptions::default(), a.seed, mode)?;
    let path = write_dataset(&ds, &a.out)?;
    println!("{} samples -> {}", ds.samples.len(), path.display());
    Ok(())
}

pub fn cmd_train(a: TrainArgs) -> Result<()> {
    let data = Loaded::open(&a.manifest, &a.split_file)?;
    let train = data.samples(SplitName::Train)?;
    let (model, curve) = if a.variant == "pretrain" {
        let val = data.samples(SplitName::Val)?;
        let cfg = occlusion_forge::netcore::TrainConfig {
            base_lr: a.lr.unwrap_or(0.01),
            max_iters: a.iterations.unwrap_or(1500),
            lr_drop_every: 1000,
            seed: a.seed,
            ..pretrain_profile()
        };
        pretrain(ModelSpec::default_classifier(data.cropped.classes.len()), &train, Some(&val), &cfg)?
    } else {
        let mut cfg = profile(&a.profile)?;
        cfg.seed = a.seed;
        if let Some(lr) = a.lr {
            cfg.base_lr = lr;
        }
        if let Some(n) = a.iterations {
            cfg.max_iters = n;
        }
        let variant = VariantSpec::named(&a.variant, cfg)?;
        let base_path = a
            .base
            .as_ref()
            .ok_or_else(|| Error::Config(format!("variant `{}` needs --base", a.variant)))?;
        let base = read_checkpoint(base_path)?;
        let batch = match &variant.recipe {
            Recipe::Clean => Batch::from_samples(&train, base.meta.input_mean)?,
            Recipe::Grid { .. } => {
                let path = a
                    .dataset
                    .as_ref()
                    .ok_or_else(|| Error::Config(format!("variant `{}` needs --dataset", a.variant)))?;
                let ds = read_dataset(path)?;
                let rasters: Vec<&Raster> = ds.samples.iter().map(|s| &s.raster).collect();
                Batch::from_rasters(&rasters, ds.samples.iter().map(|s| s.class_id).collect(), base.meta.input_mean)?
            }
        };
        finetune(&base, &variant, &batch, None)?
    };
    write_checkpoint(&model, &a.out)?;
    write_text(&a.out.with_extension("curve.csv"), curve.to_csv())?;
    if !curve.validation.is_empty() {
        write_text(&a.out.with_extension("val.csv"), curve.validation_csv())?;
    }
    info!("{} iterations, final loss {:?}", curve.points.len(), curve.points.last().map(|p| p.loss));
    Ok(())
}

pub fn cmd_synth(cmd: SynthCmd) -> Result<()> {
    match cmd {
        SynthCmd::Generator {
            manifest,
            split_file,
            epochs,
            seed,
            out,
        } => {
            let data = Loaded::open(&manifest, &split_file)?;
            let train = data.samples(SplitName::Train)?;
            let raw = stack_inputs(&train.iter().map(|s| &s.raster).collect::<Vec<_>>());
            let (g, report) = train_generator(
                &raw,
                &GeneratorConfig {
                    epochs,
                    seed,
                    ..GeneratorConfig::default()
                },
            )?;
            write_checkpoint(&g, &out)?;
            println!("mse {:.5} (constant image {:.5})", report.final_mse, report.constant_mse);
        }
        SynthCmd::Bank {
            generator,
            classifier,
            per_class,
            out_of_domain,
            seed,
            out,
        } => {
            let g = read_checkpoint(&generator)?;
            let c = read_checkpoint(&classifier)?;
            let bank = build_bank(
                &g,
                &c,
                &BankConfig {
                    per_class,
                    out_of_domain,
                    seed,
                    ..BankConfig::default()
                },
            )?;
            write_bank(&bank, &out)?;
            let degenerate = bank.entries.iter().filter(|e| e.degenerate).count();
            println!("{} occluders ({degenerate} degenerate)", bank.entries.len());
        }
    }
    Ok(())
}

pub fn cmd_eval(a: EvalArgs) -> Result<()> {
    let data = Loaded::open(&a.data.manifest, &a.data.split_file)?;
    let base = data.samples(a.data.split.parse()?)?;
    let grid = Grid::new(parse_types(&a.types)?, parse_levels(&a.levels)?);
    let bank = bank_or_empty(a.bank.as_deref())?;
    let loaded = models(&a.models)?;
    let refs: Vec<&ModelCheckpoint> = loaded.iter().collect();
    let gray = data.gray(a.data.gray)?;
    let tables = evaluate_grid_draws(&refs, &base, &grid, &bank, gray, &ComposeOptions::default(), a.seed, a.draws)?;
    for (path, t) in a.models.iter().zip(&tables) {
        let stem = file_stem(path);
        write_text(&a.out.join(format!("accuracy_{stem}.csv")), t.to_csv())?;
        write_text(&a.out.join(format!("accuracy_{stem}.ndjson")), t.to_ndjson())?;
    }
    Ok(())
}

fn cell_batches(
    base: &[&LabeledSample],
    kind: OcclusionType,
    level: u32,
    bank: &occlusion_forge::imagination::OccluderBank,
    gray: Color,
    seed: u64,
) -> Result<(Vec<Raster>, Vec<usize>)> {
    let ds = generate_imagined_dataset(
        base,
        &Grid::single(kind, level),
        bank,
        gray,
        &ComposeOptions::default(),
        seed,
        AssignmentMode::CrossProduct,
    )?;
    let labels = ds.samples.iter().map(|s| s.class_id).collect();
    Ok((ds.samples.into_iter().map(|s| s.raster).collect(), labels))
}

pub fn cmd_analyze(cmd: AnalyzeCmd) -> Result<()> {
    match cmd {
        AnalyzeCmd::J {
            models: paths,
            data,
            bank,
            types,
            levels,
            tap,
            seed,
            out,
        } => {
            check_tap(&tap)?;
            let loaded = Loaded::open(&data.manifest, &data.split_file)?;
            let base = loaded.samples(data.split.parse()?)?;
            let bank = bank_or_empty(bank.as_deref())?;
            let gray = loaded.gray(data.gray)?;
            let nets = models(&paths)?;
            let mut rows = Vec::new();
            for kind in parse_types(&types)? {
                for level in parse_levels(&levels)? {
                    let (rasters, labels) = cell_batches(&base, kind, level, &bank, gray, seed)?;
                    for (path, m) in paths.iter().zip(&nets) {
                        let batch = Batch::from_rasters(&rasters, labels.clone(), m.meta.input_mean)?;
                        match separability(&extract_features(m, &batch, &tap)?) {
                            Ok(report) => rows.push(SeparabilityRow {
                                variant: file_stem(path),
                                kind,
                                level,
                                report,
                            }),
                            Err(Error::DegenerateIntraClass) => {
                                log::warn!("{} {kind} {level}: no within-class spread; row skipped", path.display())
                            }
                            Err(e) => return Err(e),
                        }
                    }
                }
            }
            write_text(&out, separability_csv(&rows))?;
        }
        AnalyzeCmd::Pca {
            model,
            data,
            bank,
            kind,
            levels,
            classes,
            tap,
            seed,
            out,
        } => {
            check_tap(&tap)?;
            let loaded = Loaded::open(&data.manifest, &data.split_file)?;
            let mut base = loaded.samples(data.split.parse()?)?;
            if let Some(c) = classes {
                let keep: Vec<usize> = c
                    .split(',')
                    .map(|t| t.trim().parse().map_err(|_| Error::Config(format!("bad class list `{c}`"))))
                    .collect::<Result<_>>()?;
                base.retain(|s| keep.contains(&s.class_id));
            }
            let kind: OcclusionType = kind.parse()?;
            let bank = bank_or_empty(bank.as_deref())?;
            let gray = loaded.gray(data.gray)?;
            let m = read_checkpoint(&model)?;
            let feats = |level: u32| -> Result<(Vec<f64>, Vec<usize>, usize)> {
                let (rasters, labels) = cell_batches(&base, kind, level, &bank, gray, seed)?;
                let batch = Batch::from_rasters(&rasters, labels.clone(), m.meta.input_mean)?;
                let pass = m.forward_from(0, batch.len(), &batch.inputs)?;
                let (rows, width) = pass.tap(&tap).expect("tap checked");
                Ok((rows.to_vec(), labels, width))
            };
            let (rows0, _, width) = feats(0)?;
            let proj = pca_fit(&rows0, width, 2)?;
            let mut points = Vec::new();
            for level in parse_levels(&levels)? {
                let (rows, labels, _) = feats(level)?;
                for (c, label) in pca_project(&proj, &rows)?.into_iter().zip(labels) {
                    points.push((label, level, c));
                }
            }
            write_text(&out, pca_csv(&points))?;
            println!("explained {:?}", proj.explained);
        }
        AnalyzeCmd::Heatmap {
            model,
            data,
            level,
            stride,
            count,
            logit,
            out,
        } => {
            let loaded = Loaded::open(&data.manifest, &data.split_file)?;
            let base = loaded.samples(data.split.parse()?)?;
            let gray = loaded.gray(data.gray)?;
            let m = read_checkpoint(&model)?;
            let mode = if logit { Confidence::Logit } else { Confidence::Probability };
            let mut lines = String::new();
            for s in base.iter().take(count) {
                let h = heatmap(&m, s, level, stride, gray, mode)?;
                let mut v = serde_json::to_value(&h).expect("heat map serializes");
                v["id"] = serde_json::json!(s.id);
                lines.push_str(&v.to_string());
                lines.push('\n');
                write_text(&out.join(format!("{}.pgm", s.id)), h.to_pgm())?;
            }
            write_text(&out.join("heatmaps.ndjson"), lines)?;
        }
    }
    Ok(())
}

/// Resolves the run configuration and output root, then runs the pipeline.
pub fn cmd_repro(a: ReproArgs) -> Result<experiment::RunSummary> {
    let mut rc = match &a.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = a.seed {
        rc.experiment.seed = s;
    }
    let out = a
        .out
        .or(rc.output.clone())
        .ok_or_else(|| Error::Config("no output directory (--out or [run] output)".into()))?;
    repro(&rc.experiment, &out)
}

pub fn repro(config: &ExperimentConfig, out: &Path) -> Result<experiment::RunSummary> {
    let summary = experiment::run(config, out)?;
    for c in &summary.criteria {
        println!("criterion {:>2} {:<26} {}", c.criterion, c.name, if c.pass { "PASS" } else { "FAIL" });
    }
    println!("total {:.1}s", summary.timing.total_s);
    Ok(summary)
}

/// Caps the global rayon pool from `OCCLUSION_FORGE_THREADS`.
pub fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("OCCLUSION_FORGE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("OCCLUSION_FORGE_THREADS=`{v}` is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Parses `args`, runs, and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return exit_code(&e);
    }
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_USAGE);
        assert_eq!(exit_code(&Error::io("p", std::io::Error::other("x"))), EXIT_IO);
        assert_eq!(exit_code(&Error::Training("nan".into()).context("run")), EXIT_NUMERIC);
    }

    #[test]
    fn missing_out_is_usage() {
        assert_eq!(main_with(["occlusion-forge", "corpus", "gen", "--classes", "3"]), EXIT_USAGE);
    }

    #[test]
    fn help_is_ok() {
        assert_eq!(main_with(["occlusion-forge", "--help"]), EXIT_OK);
    }
}
