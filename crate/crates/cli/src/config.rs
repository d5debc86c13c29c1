//! Run configuration files: flat `key = value` pairs under section headers.
//!
//! ```ini
//! [run]
//! seed = 7
//! output = runs/desk
//! profile = desk
//!
//! [variants]
//! names = baseline, imagination
//! ```
//!
//! Missing keys keep the desk defaults; unknown sections or keys are errors.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;
use occlusion_forge::experiment::ExperimentConfig;
use occlusion_forge::netcore::TrainConfig;
use occlusion_forge::occlusion::OcclusionType;
use occlusion_forge::{Error, Result};

/// Everything `repro` needs: the experiment plus where to put it.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub output: Option<PathBuf>,
    pub profile: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentConfig::desk(),
            output: None,
            profile: "desk".into(),
        }
    }
}

/// `desk` or `paper` fine-tuning schedule.
pub fn profile(name: &str) -> Result<TrainConfig> {
    match name {
        "desk" => Ok(TrainConfig::desk()),
        "paper" => Ok(TrainConfig::paper()),
        other => Err(Error::Config(format!("unknown profile `{other}`; valid: desk, paper"))),
    }
}

/// `a:b:step`, a comma list, or a single level.
pub fn parse_levels(s: &str) -> Result<Vec<u32>> {
    let bad = || Error::Config(format!("bad level spec `{s}` (e.g. 0:100:10, 20,40 or 40)"));
    let s = s.trim();
    if s.contains(':') {
        let parts: Vec<u32> = s
            .split(':')
            .map(|p| p.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let [lo, hi, step] = parts[..] else { return Err(bad()) };
        if step == 0 || lo > hi {
            return Err(bad());
        }
        return Ok((lo..=hi).step_by(step as usize).collect());
    }
    s.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect()
}

pub fn parse_types(s: &str) -> Result<Vec<OcclusionType>> {
    s.split(',').map(|t| OcclusionType::from_str(t.trim())).collect()
}

/// `3:1:1`.
pub fn parse_ratios(s: &str) -> Result<[u32; 3]> {
    let parts: Vec<u32> = s
        .split(':')
        .map(|p| p.trim().parse().map_err(|_| Error::Config(format!("bad ratios `{s}`"))))
        .collect::<Result<_>>()?;
    parts
        .try_into()
        .map_err(|_| Error::Config(format!("ratios `{s}` need three parts")))
}

fn list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty()).map(String::from).collect()
}

fn num<T: FromStr>(section: &str, key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("[{section}] {key} = `{v}` is not a valid number")))
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::Config(format!("config syntax: {e}")))?;
        let mut cfg = RunConfig::default();
        // The profile decides the fine-tuning defaults; read it first so
        // individual keys can still override.
        if let Some(p) = ini.section(Some("run")).and_then(|s| s.get("profile")) {
            cfg.profile = p.trim().to_string();
            cfg.experiment.finetune = profile(&cfg.profile)?;
        }
        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if props.iter().next().is_some() {
                    return Err(Error::Config("keys outside a [section]".into()));
                }
                continue;
            };
            for (key, value) in props.iter() {
                cfg.set(section, key, value)?;
            }
        }
        Ok(cfg)
    }

    fn set(&mut self, section: &str, key: &str, v: &str) -> Result<()> {
        let e = &mut self.experiment;
        match (section, key) {
            ("run", "seed") => e.seed = num(section, key, v)?,
            ("run", "output") => self.output = Some(PathBuf::from(v.trim())),
            ("run", "profile") => {}
            ("corpus", "classes") => e.classes = num(section, key, v)?,
            ("corpus", "per_class") => e.per_class = num(section, key, v)?,
            ("corpus", "image_size") => e.image_size = num(section, key, v)?,
            ("corpus", "ratios") => e.ratios = parse_ratios(v)?,
            ("occlusion", "types") => e.eval_types = parse_types(v)?,
            ("occlusion", "levels") => e.eval_levels = parse_levels(v)?,
            ("occlusion", "draws") => e.eval_draws = num(section, key, v)?,
            ("variants", "names") => e.variants = list(v),
            ("pretrain", "lr") => e.pretrain.base_lr = num(section, key, v)?,
            ("pretrain", "iterations") => e.pretrain.max_iters = num(section, key, v)?,
            ("pretrain", "drop_every") => e.pretrain.lr_drop_every = num(section, key, v)?,
            ("pretrain", "batch_size") => e.pretrain.batch_size = num(section, key, v)?,
            ("finetune", "lr") => e.finetune.base_lr = num(section, key, v)?,
            ("finetune", "iterations") => e.finetune.max_iters = num(section, key, v)?,
            ("finetune", "drop_every") => e.finetune.lr_drop_every = num(section, key, v)?,
            ("finetune", "batch_size") => e.finetune.batch_size = num(section, key, v)?,
            ("generator", "epochs") => e.generator.epochs = num(section, key, v)?,
            ("generator", "lr") => e.generator.base_lr = num(section, key, v)?,
            ("am", "iterations") => e.bank.am.iterations = num(section, key, v)?,
            ("am", "step") => e.bank.am.step = num(section, key, v)?,
            ("am", "lambda") => e.bank.am.lambda = num(section, key, v)?,
            ("am", "runs") => e.am_runs = num(section, key, v)?,
            ("bank", "per_class") => e.bank.per_class = num(section, key, v)?,
            ("bank", "out_of_domain") => e.bank.out_of_domain = num(section, key, v)?,
            ("analysis", "separability_levels") => e.separability_levels = parse_levels(v)?,
            ("analysis", "diagonal_levels") => e.diagonal_levels = parse_levels(v)?,
            ("analysis", "heatmap_samples") => e.heatmap_samples = num(section, key, v)?,
            ("analysis", "heatmap_level") => e.heatmap_level = num(section, key, v)?,
            ("analysis", "heatmap_stride") => e.heatmap_stride = Some(num(section, key, v)?),
            ("checks", "feature_sets") => e.checks.feature_sets = num(section, key, v)?,
            ("checks", "gradient_models") => e.checks.gradient_models = num(section, key, v)?,
            ("checks", "geometry_draws") => e.checks.geometry_draws = num(section, key, v)?,
            ("checks", "codec_rasters") => e.checks.codec_rasters = num(section, key, v)?,
            _ => return Err(Error::Config(format!("unknown key `{key}` in [{section}]"))),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels() {
        assert_eq!(parse_levels("0:100:10").unwrap().len(), 11);
        assert_eq!(parse_levels("20, 40").unwrap(), vec![20, 40]);
        assert_eq!(parse_levels("40").unwrap(), vec![40]);
        assert!(parse_levels("0:100:0").is_err());
        assert!(parse_levels("x").is_err());
    }

    #[test]
    fn ratios_and_types() {
        assert_eq!(parse_ratios("3:1:1").unwrap(), [3, 1, 1]);
        assert!(parse_ratios("3:1").is_err());
        assert_eq!(parse_types("rect,indomain").unwrap().len(), 2);
        assert!(parse_types("rect,blob").is_err());
    }

    #[test]
    fn empty_file_is_desk() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn overrides_apply() {
        let c = RunConfig::parse("[run]\nseed = 3\nprofile = paper\n[variants]\nnames = baseline\n[finetune]\nlr = 0.01\n").unwrap();
        assert_eq!(c.experiment.seed, 3);
        assert_eq!(c.experiment.variants, vec!["baseline"]);
        assert_eq!(c.experiment.finetune.batch_size, 256);
        assert_eq!(c.experiment.finetune.base_lr, 0.01);
    }

    #[test]
    fn empty_variant_list_parses_but_fails_validation() {
        let c = RunConfig::parse("[variants]\nnames =\n").unwrap();
        assert!(c.experiment.variants.is_empty());
        assert!(c.experiment.validate().is_err());
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(RunConfig::parse("[run]\ncolour = red\n").is_err());
        assert!(RunConfig::parse("[run]\nprofile = fast\n").is_err());
        assert!(RunConfig::parse("[corpus]\nclasses = ten\n").is_err());
    }
}
