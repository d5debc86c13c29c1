//! Imagined (occluded) dataset generation.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::compose::{compose, ComposeOptions, ComposedSample};
use super::{OcclusionSpec, OcclusionType};
use crate::corpus::LabeledSample;
use crate::error::{Error, Result};
use crate::imagination::bank::OccluderBank;
use crate::raster::{read_pnm_file, write_pnm_file, Color, Rect};
use crate::rng::{derive_seed, purpose, SplitMix64};

/// Occlusion types crossed with levels; cells are type-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub types: Vec<OcclusionType>,
    pub levels: Vec<u32>,
}

impl Grid {
    pub fn new(types: Vec<OcclusionType>, levels: Vec<u32>) -> Self {
        Self { types, levels }
    }

    pub fn single(kind: OcclusionType, level: u32) -> Self {
        Self::new(vec![kind], vec![level])
    }

    /// `0, step, 2*step, ..., 100`.
    pub fn stepped_levels(step: u32) -> Vec<u32> {
        assert!(step > 0);
        (0..=100).step_by(step as usize).collect()
    }

    pub fn cells(&self) -> Vec<(OcclusionType, u32)> {
        self.types
            .iter()
            .flat_map(|&t| self.levels.iter().map(move |&l| (t, l)))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.types.is_empty() || self.levels.is_empty() {
            return Err(Error::Config("occlusion grid is empty".into()));
        }
        if let Some(l) = self.levels.iter().find(|&&l| l > 100) {
            return Err(Error::Config(format!("level {l} outside [0, 100]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssignmentMode {
    /// One cell per base sample, dealt round-robin over a seeded shuffle.
    RoundRobin,
    /// Every base sample at every cell.
    CrossProduct,
}

impl std::str::FromStr for AssignmentMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "roundrobin" => Ok(AssignmentMode::RoundRobin),
            "crossproduct" => Ok(AssignmentMode::CrossProduct),
            other => Err(Error::Config(format!(
                "unknown mode `{other}`; valid: roundrobin, crossproduct"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImaginedDataset {
    pub samples: Vec<ComposedSample>,
}

impl ImaginedDataset {
    pub fn cell(&self, kind: OcclusionType, level: u32) -> impl Iterator<Item = &ComposedSample> {
        self.samples
            .iter()
            .filter(move |s| s.spec.kind == kind && s.spec.level == level)
    }
}

fn cell_key(kind: OcclusionType, level: u32) -> u64 {
    kind.code() * 1000 + level as u64
}

/// Spec for base sample `index` at one cell. Seeds depend only on
/// `(master_seed, index, type, level)`, so a per-cell run reproduces the
/// matching rows of a full cross product.
fn spec_for(
    index: usize,
    kind: OcclusionType,
    level: u32,
    bank_ids: &BankIds,
    master_seed: u64,
) -> Result<OcclusionSpec> {
    let key = cell_key(kind, level);
    let placement_seed = derive_seed(derive_seed(master_seed, index as u64, purpose::PLACEMENT), key, purpose::PLACEMENT);
    let pool = match kind {
        OcclusionType::GrayRect => None,
        OcclusionType::InDomain => Some(&bank_ids.in_domain),
        OcclusionType::OutOfDomain => Some(&bank_ids.out_of_domain),
    };
    let occluder_id = match pool {
        None => None,
        Some(ids) if ids.is_empty() => {
            return Err(Error::Bank(format!("bank has no {kind} occluders")));
        }
        Some(ids) => {
            let mut rng = SplitMix64::derived(
                derive_seed(master_seed, index as u64, purpose::OCCLUDER_PICK),
                key,
                purpose::OCCLUDER_PICK,
            );
            Some(ids[rng.below(ids.len() as u64) as usize].clone())
        }
    };
    Ok(OcclusionSpec {
        kind,
        level,
        occluder_id,
        placement_seed,
    })
}

struct BankIds {
    in_domain: Vec<String>,
    out_of_domain: Vec<String>,
}

/// Composes occluded versions of `base`; labels are carried over unchanged.
pub fn generate_imagined_dataset(
    base: &[&LabeledSample],
    grid: &Grid,
    bank: &OccluderBank,
    gray: Color,
    options: &ComposeOptions,
    master_seed: u64,
    mode: AssignmentMode,
) -> Result<ImaginedDataset> {
    grid.validate()?;
    let cells = grid.cells();
    let bank_ids = BankIds {
        in_domain: bank.in_domain().map(|e| e.id.clone()).collect(),
        out_of_domain: bank.out_of_domain().map(|e| e.id.clone()).collect(),
    };
    let jobs: Vec<(usize, OcclusionType, u32)> = match mode {
        AssignmentMode::CrossProduct => (0..base.len())
            .flat_map(|i| cells.iter().map(move |&(t, l)| (i, t, l)))
            .collect(),
        AssignmentMode::RoundRobin => {
            let mut order: Vec<usize> = (0..base.len()).collect();
            SplitMix64::derived(master_seed, 0, purpose::ASSIGNMENT).shuffle(&mut order);
            let mut assigned = vec![0usize; base.len()];
            for (pos, &i) in order.iter().enumerate() {
                assigned[i] = pos % cells.len();
            }
            assigned
                .iter()
                .enumerate()
                .map(|(i, &c)| (i, cells[c].0, cells[c].1))
                .collect()
        }
    };
    let samples = jobs
        .par_iter()
        .map(|&(i, kind, level)| {
            let spec = spec_for(i, kind, level, &bank_ids, master_seed)?;
            compose(base[i], &spec, bank, gray, options).map_err(|e| e.context(base[i].id.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ImaginedDataset { samples })
}

/// One manifest row; `placed` is the first box's rectangle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetRow {
    pub base_id: String,
    pub path: String,
    pub class: usize,
    #[serde(rename = "type")]
    pub kind: OcclusionType,
    pub level: u32,
    pub occluder_id: Option<String>,
    pub placed: Rect,
    pub opaque_fraction: f64,
    pub seed_index: u64,
    pub area_ratio: f64,
    pub clamped: bool,
    pub placement_seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra_placed: Vec<Rect>,
}

fn image_name(s: &ComposedSample) -> String {
    let base: String = s
        .base_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{base}__{}{}.ppm", s.spec.kind.token(), s.spec.level)
}

/// Writes composed rasters under `dir/images/` and rows to `dir/dataset.ndjson`.
pub fn write_dataset(ds: &ImaginedDataset, dir: &Path) -> Result<PathBuf> {
    let images = dir.join("images");
    fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let mut out = String::new();
    for (k, s) in ds.samples.iter().enumerate() {
        let rel = format!("images/{}", image_name(s));
        write_pnm_file(&dir.join(&rel), &s.raster)?;
        let row = DatasetRow {
            base_id: s.base_id.clone(),
            path: rel,
            class: s.class_id,
            kind: s.spec.kind,
            level: s.spec.level,
            occluder_id: s.spec.occluder_id.clone(),
            placed: s.placed[0],
            opaque_fraction: s.opaque_fraction,
            seed_index: k as u64,
            area_ratio: s.area_ratio,
            clamped: s.clamped,
            placement_seed: s.spec.placement_seed,
            extra_placed: s.placed[1..].to_vec(),
        };
        out.push_str(&serde_json::to_string(&row).expect("row serializes"));
        out.push('\n');
    }
    let path = dir.join("dataset.ndjson");
    fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn read_dataset(path: &Path) -> Result<ImaginedDataset> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut samples = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: DatasetRow =
            serde_json::from_str(&line).map_err(|e| Error::Schema(format!("dataset row: {e}")))?;
        let mut placed = vec![row.placed];
        placed.extend(row.extra_placed);
        samples.push(ComposedSample {
            raster: read_pnm_file(&base.join(&row.path))?,
            base_id: row.base_id,
            class_id: row.class,
            spec: OcclusionSpec {
                kind: row.kind,
                level: row.level,
                occluder_id: row.occluder_id,
                placement_seed: row.placement_seed,
            },
            placed,
            nominal_level: row.level,
            area_ratio: row.area_ratio,
            opaque_fraction: row.opaque_fraction,
            clamped: row.clamped,
        });
    }
    Ok(ImaginedDataset { samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{crop_corpus, generate_glyph_corpus, CorpusConfig};
    use crate::imagination::bank::render_out_of_domain;

    fn bases() -> Vec<LabeledSample> {
        let m = generate_glyph_corpus(&CorpusConfig {
            classes: 3,
            per_class: 100,
            image_size: 48,
            seed: 2,
        })
        .unwrap();
        crop_corpus(&m).unwrap().samples
    }

    #[test]
    fn round_robin_levels_are_balanced() {
        let b = bases();
        let refs: Vec<&LabeledSample> = b.iter().collect();
        let grid = Grid::new(vec![OcclusionType::GrayRect], Grid::stepped_levels(10));
        let ds = generate_imagined_dataset(
            &refs,
            &grid,
            &OccluderBank::default(),
            Color::gray(90),
            &Default::default(),
            5,
            AssignmentMode::RoundRobin,
        )
        .unwrap();
        assert_eq!(ds.samples.len(), 300);
        let nominal = 300.0 / 11.0;
        for l in grid.levels {
            let n = ds.cell(OcclusionType::GrayRect, l).count() as f64;
            assert!((n - nominal).abs() <= 1.0, "level {l}: {n}");
        }
        for (s, b) in ds.samples.iter().zip(&b) {
            assert_eq!(s.class_id, b.class_id);
            assert_eq!(s.base_id, b.id);
        }
    }

    #[test]
    fn single_cell_grid() {
        let b = bases();
        let refs: Vec<&LabeledSample> = b.iter().take(20).collect();
        let bank = render_out_of_domain(10, 48, 0);
        let ds = generate_imagined_dataset(
            &refs,
            &Grid::single(OcclusionType::OutOfDomain, 40),
            &bank,
            Color::gray(90),
            &Default::default(),
            5,
            AssignmentMode::RoundRobin,
        )
        .unwrap();
        assert!(ds.samples.iter().all(|s| s.spec.kind == OcclusionType::OutOfDomain && s.spec.level == 40));
    }

    #[test]
    fn per_cell_matches_cross_product() {
        let b = bases();
        let refs: Vec<&LabeledSample> = b.iter().take(15).collect();
        let bank = render_out_of_domain(10, 48, 0);
        let grid = Grid::new(vec![OcclusionType::GrayRect, OcclusionType::OutOfDomain], vec![20, 60]);
        let full = generate_imagined_dataset(
            &refs, &grid, &bank, Color::gray(9), &Default::default(), 3, AssignmentMode::CrossProduct,
        )
        .unwrap();
        assert_eq!(full.samples.len(), 60);
        let one = generate_imagined_dataset(
            &refs,
            &Grid::single(OcclusionType::OutOfDomain, 60),
            &bank,
            Color::gray(9),
            &Default::default(),
            3,
            AssignmentMode::CrossProduct,
        )
        .unwrap();
        let from_full: Vec<_> = full.cell(OcclusionType::OutOfDomain, 60).cloned().collect();
        assert_eq!(one.samples, from_full);
    }

    #[test]
    fn dataset_is_deterministic_and_roundtrips() {
        let b = bases();
        let refs: Vec<&LabeledSample> = b.iter().take(12).collect();
        let bank = render_out_of_domain(6, 48, 1);
        let grid = Grid::new(vec![OcclusionType::GrayRect, OcclusionType::OutOfDomain], vec![0, 50]);
        let run = || {
            generate_imagined_dataset(&refs, &grid, &bank, Color::gray(7), &Default::default(), 11, AssignmentMode::RoundRobin)
                .unwrap()
        };
        let a = run();
        assert_eq!(a, run());
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let p1 = write_dataset(&a, d1.path()).unwrap();
        let p2 = write_dataset(&run(), d2.path()).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
        assert_eq!(read_dataset(&p1).unwrap(), a);
    }

    #[test]
    fn empty_grid_rejected() {
        let g = Grid::new(vec![], vec![10]);
        assert!(g.validate().is_err());
    }
}
