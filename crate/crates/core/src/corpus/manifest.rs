//! NDJSON corpus manifests and JSON split manifests.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CorpusManifest, LabeledSample, Provenance, SplitManifest};
use crate::error::{Error, Result};
use crate::raster::{read_pnm_file, write_pnm_file, Rect};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub version: u32,
    pub classes: Vec<String>,
    pub master_seed: u64,
    pub provenance: Provenance,
    pub class_counts: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub class: usize,
    pub path: String,
    pub bbox: Rect,
    pub seed_index: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bboxes: Option<Vec<Rect>>,
}

fn file_name_for(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Writes `manifest.ndjson` into `dir`, plus one P6 file per generated
/// sample under `dir/images/`. Ingested samples keep their source path.
pub fn write_manifest(manifest: &CorpusManifest, dir: &Path) -> Result<PathBuf> {
    let images = dir.join("images");
    fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let header = ManifestHeader {
        version: MANIFEST_VERSION,
        classes: manifest.classes.clone(),
        master_seed: manifest.master_seed,
        provenance: manifest.provenance.clone(),
        class_counts: manifest.class_counts(),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for s in &manifest.samples {
        let path = match &s.source {
            Some(p) => p.clone(),
            None => {
                let rel = format!("images/{}.ppm", file_name_for(&s.id));
                write_pnm_file(&dir.join(&rel), &s.raster)?;
                rel
            }
        };
        let record = SampleRecord {
            id: s.id.clone(),
            class: s.class_id,
            path,
            bbox: s.bboxes[0],
            seed_index: s.seed_index,
            bboxes: (s.bboxes.len() > 1).then(|| s.bboxes.clone()),
        };
        out.push_str(&serde_json::to_string(&record).expect("record serializes"));
        out.push('\n');
    }
    let path = dir.join("manifest.ndjson");
    fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn read_manifest(path: &Path) -> Result<CorpusManifest> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Schema(format!("{} is empty", path.display())))?
        .map_err(|e| Error::io(path, e))?;
    let header: ManifestHeader = serde_json::from_str(&first)
        .map_err(|e| Error::Schema(format!("manifest header: {e}")))?;
    if header.version != MANIFEST_VERSION {
        return Err(Error::Schema(format!("unsupported manifest version {}", header.version)));
    }
    let mut samples = Vec::new();
    for line in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SampleRecord =
            serde_json::from_str(&line).map_err(|e| Error::Schema(format!("manifest row: {e}")))?;
        let image_path = base.join(&rec.path);
        let raster = read_pnm_file(&image_path)?;
        let external = matches!(header.provenance, Provenance::External { .. });
        samples.push(LabeledSample {
            id: rec.id,
            raster,
            class_id: rec.class,
            bboxes: rec.bboxes.unwrap_or_else(|| vec![rec.bbox]),
            seed_index: rec.seed_index,
            source: external.then_some(rec.path),
        });
    }
    let manifest = CorpusManifest {
        classes: header.classes,
        samples,
        provenance: header.provenance,
        master_seed: header.master_seed,
    };
    manifest.validate()?;
    Ok(manifest)
}

pub fn write_split(split: &SplitManifest, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let body = serde_json::to_string(split).expect("split serializes");
    writeln!(f, "{body}").map_err(|e| Error::io(path, e))
}

pub fn read_split(path: &Path) -> Result<SplitManifest> {
    let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&body).map_err(|e| Error::Schema(format!("split manifest: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_glyph_corpus, split, CorpusConfig};

    #[test]
    fn manifest_roundtrip_through_disk() {
        let cfg = CorpusConfig {
            classes: 3,
            per_class: 10,
            image_size: 32,
            seed: 4,
        };
        let m = generate_glyph_corpus(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = write_manifest(&m, dir.path()).unwrap();
        let back = read_manifest(&path).unwrap();
        assert_eq!(back, m);

        let first = fs::read(&path).unwrap();
        write_manifest(&m, dir.path()).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);

        let header: serde_json::Value =
            serde_json::from_str(std::str::from_utf8(&first).unwrap().lines().next().unwrap()).unwrap();
        assert_eq!(header["version"], 1);
        assert_eq!(header["master_seed"], 4);

        let s = split(&m, [3, 1, 1], 1).unwrap();
        let sp = dir.path().join("split.json");
        write_split(&s, &sp).unwrap();
        assert_eq!(read_split(&sp).unwrap(), s);
    }
}
