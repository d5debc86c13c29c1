//! Labeled image corpora: procedural generation, external ingestion,
//! bounding-box cropping and stratified splitting.

pub mod glyph;
mod ingest;
mod manifest;

pub use ingest::ingest_external;
pub use manifest::{read_manifest, read_split, write_manifest, write_split, ManifestHeader, SampleRecord};

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::raster::{Raster, Rect};
use crate::rng::{purpose, SplitMix64};
use glyph::GlyphParams;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub id: String,
    pub raster: Raster,
    pub class_id: usize,
    pub bboxes: Vec<Rect>,
    /// Index into the generator's sample sequence, for generated corpora.
    pub seed_index: Option<u64>,
    /// Where the raster came from, for ingested corpora.
    pub source: Option<String>,
}

impl LabeledSample {
    pub fn validate(&self, class_count: usize) -> Result<()> {
        let bad = |reason: String| Error::Annotation {
            id: self.id.clone(),
            reason,
        };
        if self.bboxes.is_empty() {
            return Err(bad("no bounding boxes".into()));
        }
        if self.class_id >= class_count {
            return Err(bad(format!("class {} >= {class_count}", self.class_id)));
        }
        for b in &self.bboxes {
            if b.w == 0 || b.h == 0 || !b.fits_in(self.raster.width(), self.raster.height()) {
                return Err(bad(format!(
                    "bbox {:?} outside {}x{} image",
                    b.to_array(),
                    self.raster.width(),
                    self.raster.height()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Generated { config_hash: String },
    External { path: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub classes: Vec<String>,
    pub samples: Vec<LabeledSample>,
    pub provenance: Provenance,
    pub master_seed: u64,
}

impl CorpusManifest {
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for s in &self.samples {
            counts[s.class_id] += 1;
        }
        counts
    }

    pub fn get(&self, id: &str) -> Option<&LabeledSample> {
        self.samples.iter().find(|s| s.id == id)
    }

    /// Samples for `ids`, in the order given.
    pub fn select(&self, ids: &[String]) -> Result<Vec<&LabeledSample>> {
        let index: std::collections::HashMap<&str, &LabeledSample> =
            self.samples.iter().map(|s| (s.id.as_str(), s)).collect();
        ids.iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::Schema(format!("sample `{id}` not in manifest")))
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for s in &self.samples {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Annotation {
                    id: s.id.clone(),
                    reason: "duplicate id".into(),
                });
            }
            s.validate(self.classes.len())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub classes: usize,
    pub per_class: usize,
    pub image_size: u32,
    pub seed: u64,
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {}", self.classes)));
        }
        if self.classes > glyph::max_corpus_classes() {
            return Err(Error::Config(format!(
                "{} classes requested but only {} glyph family/jitter combinations exist",
                self.classes,
                glyph::max_corpus_classes()
            )));
        }
        if self.per_class < 10 {
            return Err(Error::Config(format!("per_class must be >= 10, got {}", self.per_class)));
        }
        if self.image_size < 32 {
            return Err(Error::Config(format!("image_size must be >= 32, got {}", self.image_size)));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&canonical);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Renders `classes * per_class` glyph samples; sample `i` has class
/// `i / per_class` and draws from its own derived stream.
pub fn generate_glyph_corpus(config: &CorpusConfig) -> Result<CorpusManifest> {
    config.validate()?;
    let classes: Vec<String> = (0..config.classes)
        .map(|k| glyph::class_name(k).expect("validated class count"))
        .collect();
    let total = config.classes * config.per_class;
    let samples = (0..total)
        .into_par_iter()
        .map(|i| {
            let class_id = i / config.per_class;
            let (family, regime) = glyph::class_style(class_id).expect("validated class count");
            let mut rng = SplitMix64::derived(config.seed, i as u64, purpose::GLYPH);
            let params = GlyphParams::sample(family, regime, &mut rng);
            let (raster, bbox) = glyph::render_sample(&params, config.image_size, &mut rng);
            LabeledSample {
                id: format!("g{i:06}"),
                raster,
                class_id,
                bboxes: vec![bbox],
                seed_index: Some(i as u64),
                source: None,
            }
        })
        .collect();
    Ok(CorpusManifest {
        classes,
        samples,
        provenance: Provenance::Generated {
            config_hash: config.hash(),
        },
        master_seed: config.seed,
    })
}

/// Keeps only the pixels of bounding box `bbox_index`.
pub fn crop_to_bbox(sample: &LabeledSample, bbox_index: usize) -> Result<LabeledSample> {
    let bbox = *sample.bboxes.get(bbox_index).ok_or_else(|| {
        Error::Size(format!(
            "bbox index {bbox_index} out of range for `{}` ({} boxes)",
            sample.id,
            sample.bboxes.len()
        ))
    })?;
    let id = if sample.bboxes.len() == 1 {
        sample.id.clone()
    } else {
        format!("{}#b{bbox_index}", sample.id)
    };
    Ok(LabeledSample {
        id,
        raster: sample.raster.crop(bbox)?,
        class_id: sample.class_id,
        bboxes: vec![Rect::new(0, 0, bbox.w, bbox.h)],
        seed_index: sample.seed_index,
        source: None,
    })
}

/// Crops every sample to its first bounding box.
pub fn crop_corpus(manifest: &CorpusManifest) -> Result<CorpusManifest> {
    let samples = manifest
        .samples
        .par_iter()
        .map(|s| crop_to_bbox(s, 0))
        .collect::<Result<Vec<_>>>()?;
    Ok(CorpusManifest {
        samples,
        ..manifest.clone()
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub ratios: [u32; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for SplitName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "val" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            other => Err(Error::Config(format!("unknown split `{other}` (train|val|test)"))),
        }
    }
}

impl SplitManifest {
    pub fn ids(&self, which: SplitName) -> &[String] {
        match which {
            SplitName::Train => &self.train,
            SplitName::Val => &self.val,
            SplitName::Test => &self.test,
        }
    }
}

/// Part sizes for `n` items by largest remainder; ties go to the earlier part.
fn apportion(n: usize, ratios: [u32; 3]) -> [usize; 3] {
    let total: u64 = ratios.iter().map(|&r| r as u64).sum();
    let mut counts = [0usize; 3];
    let mut rems = [(0u64, 0usize); 3];
    for (k, &r) in ratios.iter().enumerate() {
        let exact = n as u64 * r as u64;
        counts[k] = (exact / total) as usize;
        rems[k] = (exact % total, k);
    }
    let mut left = n - counts.iter().sum::<usize>();
    rems.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, k) in rems.iter() {
        if left == 0 {
            break;
        }
        counts[k] += 1;
        left -= 1;
    }
    counts
}

/// Stratified split: each class shuffled independently, then apportioned.
pub fn split(manifest: &CorpusManifest, ratios: [u32; 3], seed: u64) -> Result<SplitManifest> {
    if ratios.contains(&0) {
        return Err(Error::Split(format!("ratios must be positive, got {ratios:?}")));
    }
    let parts: usize = ratios.iter().map(|&r| r as usize).sum();
    let mut out = SplitManifest {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        ratios,
    };
    for class_id in 0..manifest.classes.len() {
        let mut ids: Vec<&str> = manifest
            .samples
            .iter()
            .filter(|s| s.class_id == class_id)
            .map(|s| s.id.as_str())
            .collect();
        if ids.len() < parts {
            return Err(Error::Split(format!(
                "class `{}` has {} samples, fewer than {parts} ratio parts",
                manifest.classes[class_id],
                ids.len()
            )));
        }
        SplitMix64::derived(seed, class_id as u64, purpose::SPLIT).shuffle(&mut ids);
        let [a, b, _] = apportion(ids.len(), ratios);
        out.train.extend(ids[..a].iter().map(|s| s.to_string()));
        out.val.extend(ids[a..a + b].iter().map(|s| s.to_string()));
        out.test.extend(ids[a + b..].iter().map(|s| s.to_string()));
    }
    Ok(out)
}
