//! Occluder banks: synthesized in-domain occluders plus procedurally
//! rendered out-of-domain shapes.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::glyph::{self, GlyphFamily, GlyphParams, JitterRegime};
use crate::error::{Error, Result};
use crate::raster::{read_pnm_file, write_pnm_file, Raster};
use crate::rng::{purpose, SplitMix64};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OccluderKind {
    InDomain { class_id: usize },
    OutOfDomain { family: GlyphFamily },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BankEntry {
    pub id: String,
    pub kind: OccluderKind,
    pub raster: Raster,
    pub seed: u64,
    pub final_activation: Option<f64>,
    /// Set when synthesis kept producing near-empty images.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OccluderBank {
    pub entries: Vec<BankEntry>,
}

impl OccluderBank {
    pub fn get(&self, id: &str) -> Option<&BankEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn in_domain(&self) -> impl Iterator<Item = &BankEntry> {
        self.entries
            .iter()
            .filter(|e| matches!(e.kind, OccluderKind::InDomain { .. }))
    }

    pub fn out_of_domain(&self) -> impl Iterator<Item = &BankEntry> {
        self.entries
            .iter()
            .filter(|e| matches!(e.kind, OccluderKind::OutOfDomain { .. }))
    }

    pub fn extend(&mut self, other: OccluderBank) {
        self.entries.extend(other.entries);
    }
}

/// Renders `count` out-of-domain occluders from the held-out glyph families.
pub fn render_out_of_domain(count: usize, size: u32, seed: u64) -> OccluderBank {
    let families = GlyphFamily::OUT_OF_DOMAIN;
    let entries = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = SplitMix64::derived(seed, i as u64, purpose::OUT_OF_DOMAIN);
            let family = families[rng.below(families.len() as u64) as usize];
            let params = GlyphParams::sample(family, JitterRegime::Standard, &mut rng);
            BankEntry {
                id: format!("ood{i:04}"),
                kind: OccluderKind::OutOfDomain { family },
                raster: glyph::render_cutout(&params, size),
                seed: i as u64,
                final_activation: None,
                degenerate: false,
            }
        })
        .collect();
    OccluderBank { entries }
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexRow {
    id: String,
    kind: String,
    class_or_family: String,
    seed: u64,
    final_activation: Option<f64>,
    #[serde(default)]
    degenerate: bool,
}

/// Writes `<id>.ppm` per entry and an `index.ndjson` into `dir`.
pub fn write_bank(bank: &OccluderBank, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut index = String::new();
    for e in &bank.entries {
        write_pnm_file(&dir.join(format!("{}.ppm", e.id)), &e.raster)?;
        let (kind, class_or_family) = match &e.kind {
            OccluderKind::InDomain { class_id } => ("indomain", class_id.to_string()),
            OccluderKind::OutOfDomain { family } => ("outdomain", family.name().to_string()),
        };
        let row = IndexRow {
            id: e.id.clone(),
            kind: kind.into(),
            class_or_family,
            seed: e.seed,
            final_activation: e.final_activation,
            degenerate: e.degenerate,
        };
        index.push_str(&serde_json::to_string(&row).expect("row serializes"));
        index.push('\n');
    }
    let path = dir.join("index.ndjson");
    fs::write(&path, index).map_err(|e| Error::io(&path, e))
}

pub fn read_bank(dir: &Path) -> Result<OccluderBank> {
    let path = dir.join("index.ndjson");
    let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut entries = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: IndexRow =
            serde_json::from_str(&line).map_err(|e| Error::Schema(format!("bank index: {e}")))?;
        let kind = match row.kind.as_str() {
            "indomain" => OccluderKind::InDomain {
                class_id: row
                    .class_or_family
                    .parse()
                    .map_err(|_| Error::Schema(format!("bad class `{}`", row.class_or_family)))?,
            },
            "outdomain" => OccluderKind::OutOfDomain {
                family: GlyphFamily::OUT_OF_DOMAIN
                    .into_iter()
                    .find(|f| f.name() == row.class_or_family)
                    .ok_or_else(|| Error::Schema(format!("unknown family `{}`", row.class_or_family)))?,
            },
            other => return Err(Error::Schema(format!("unknown occluder kind `{other}`"))),
        };
        entries.push(BankEntry {
            raster: read_pnm_file(&dir.join(format!("{}.ppm", row.id)))?,
            id: row.id,
            kind,
            seed: row.seed,
            final_activation: row.final_activation,
            degenerate: row.degenerate,
        });
    }
    Ok(OccluderBank { entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn out_of_domain_families_disjoint_from_corpus() {
        let bank = render_out_of_domain(50, 64, 3);
        assert_eq!(bank.out_of_domain().count(), 50);
        for e in &bank.entries {
            let OccluderKind::OutOfDomain { family } = e.kind else { panic!() };
            assert!(!GlyphFamily::CORPUS.contains(&family));
        }
        assert_eq!(bank, render_out_of_domain(50, 64, 3));
    }

    #[test]
    fn bank_roundtrip() {
        let bank = render_out_of_domain(5, 32, 1);
        let dir = tempfile::tempdir().unwrap();
        write_bank(&bank, dir.path()).unwrap();
        assert_eq!(read_bank(dir.path()).unwrap(), bank);
    }
}
