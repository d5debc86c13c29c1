//! Class-grouped feature vectors and the separability score.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcore::{ModelCheckpoint, TAP_TOP};
use crate::protocol::Batch;

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

fn compensated_mean<'a>(rows: impl Iterator<Item = &'a [f64]>, width: usize) -> Vec<f64> {
    let mut acc = vec![KahanSum::default(); width];
    let mut n = 0usize;
    for row in rows {
        acc.iter_mut().zip(row).for_each(|(a, &v)| a.add(v));
        n += 1;
    }
    acc.iter().map(|a| a.value() / n as f64).collect()
}

/// Feature vectors grouped by class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub width: usize,
    /// Class ids in `S`, ascending.
    pub classes: Vec<usize>,
    /// Row-major vectors of each class, aligned with `classes`.
    pub groups: Vec<Vec<f64>>,
    pub class_means: Vec<Vec<f64>>,
    pub global_mean: Vec<f64>,
}

impl FeatureSet {
    /// Groups `vectors` (rows of `width`) by `labels`. Classes without
    /// vectors are simply not part of the set.
    pub fn new(width: usize, vectors: &[f64], labels: &[usize]) -> Result<Self> {
        if width == 0 {
            return Err(Error::Shape("feature width must be positive".into()));
        }
        if vectors.len() != labels.len() * width {
            return Err(Error::Shape(format!(
                "{} values for {} vectors of width {width}",
                vectors.len(),
                labels.len()
            )));
        }
        if labels.is_empty() {
            return Err(Error::EmptyInput("no feature vectors".into()));
        }
        let mut classes: Vec<usize> = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        let mut groups = vec![Vec::new(); classes.len()];
        for (row, y) in vectors.chunks_exact(width).zip(labels) {
            let g = classes.binary_search(y).expect("present");
            groups[g].extend_from_slice(row);
        }
        let class_means = groups
            .iter()
            .map(|g| compensated_mean(g.chunks_exact(width), width))
            .collect();
        let global_mean = compensated_mean(vectors.chunks_exact(width), width);
        Ok(Self {
            width,
            classes,
            groups,
            class_means,
            global_mean,
        })
    }

    pub fn count(&self, group: usize) -> usize {
        self.groups[group].len() / self.width
    }

    pub fn len(&self) -> usize {
        self.groups.iter().map(|g| g.len() / self.width).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All vectors with their class ids, grouped by class.
    pub fn rows(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.classes
            .iter()
            .zip(&self.groups)
            .flat_map(move |(&c, g)| g.chunks_exact(self.width).map(move |r| (c, r)))
    }
}

/// Runs `model` on `data` and groups the named tap by true class.
pub fn extract_features(model: &ModelCheckpoint, data: &Batch, tap: &str) -> Result<FeatureSet> {
    if data.is_empty() {
        return Err(Error::EmptyInput("feature extraction on an empty cell".into()));
    }
    let pass = model.forward_from(0, data.len(), &data.inputs)?;
    let (values, width) = pass
        .tap(tap)
        .ok_or_else(|| Error::Config(format!("unknown feature tap `{tap}` (expected {TAP_TOP} or penultimate)")))?;
    let fs = FeatureSet::new(width, values, &data.labels)?;
    let missing = model.num_classes() - fs.classes.len();
    if missing > 0 {
        log::warn!("{missing} classes have no samples and are left out of the feature set");
    }
    Ok(fs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityReport {
    pub j: f64,
    pub d_inter: f64,
    pub d_intra: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Mean squared centroid distance to the global mean over mean
/// within-class spread.
pub fn separability(fs: &FeatureSet) -> Result<SeparabilityReport> {
    let s = fs.classes.len() as f64;
    if fs.classes.is_empty() {
        return Err(Error::EmptyInput("feature set has no classes".into()));
    }
    let mut inter = KahanSum::default();
    let mut intra = KahanSum::default();
    for (g, mean) in fs.class_means.iter().enumerate() {
        inter.add(sq_dist(mean, &fs.global_mean));
        let mut spread = KahanSum::default();
        for row in fs.groups[g].chunks_exact(fs.width) {
            spread.add(sq_dist(row, mean));
        }
        intra.add(spread.value() / fs.count(g) as f64);
    }
    let d_inter = inter.value() / s;
    let d_intra = intra.value() / s;
    if d_intra <= 0.0 {
        return Err(Error::DegenerateIntraClass);
    }
    Ok(SeparabilityReport {
        j: d_inter / d_intra,
        d_inter,
        d_intra,
    })
}
