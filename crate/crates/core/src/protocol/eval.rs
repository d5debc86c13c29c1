//! Top-1 accuracy tables over occlusion grids.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Batch;
use crate::corpus::LabeledSample;
use crate::error::{Error, Result};
use crate::imagination::OccluderBank;
use crate::netcore::input::{stack_inputs, INPUT_WIDTH};
use crate::netcore::loss::argmax;
use crate::netcore::ModelCheckpoint;
use crate::occlusion::{generate_imagined_dataset, AssignmentMode, ComposeOptions, Grid, OcclusionType};
use crate::raster::{Color, Raster};
use crate::rng::{derive_seed, purpose};

const EVAL_CHUNK: usize = 256;

/// Predicted class per row (ties to the lowest index).
pub fn predict(model: &ModelCheckpoint, inputs: &[f64]) -> Result<Vec<usize>> {
    let width = model.spec.input_width();
    let c = model.num_classes();
    let chunks: Vec<Vec<usize>> = inputs
        .par_chunks(EVAL_CHUNK * width)
        .map(|chunk| {
            let pass = model.forward_from(0, chunk.len() / width, chunk)?;
            Ok(pass.logits().chunks_exact(c).map(argmax).collect())
        })
        .collect::<Result<_>>()?;
    Ok(chunks.concat())
}

/// Overall top-1 and per-class accuracy (`None` for absent classes).
pub fn evaluate(model: &ModelCheckpoint, data: &Batch) -> Result<(f64, Vec<Option<f64>>)> {
    if data.is_empty() {
        return Err(Error::EmptyInput("nothing to evaluate".into()));
    }
    let pred = predict(model, &data.inputs)?;
    let c = model.num_classes();
    let mut hits = vec![0usize; c];
    let mut counts = vec![0usize; c];
    for (&p, &y) in pred.iter().zip(&data.labels) {
        if y >= c {
            return Err(Error::Shape(format!("label {y} out of range for {c} classes")));
        }
        counts[y] += 1;
        hits[y] += usize::from(p == y);
    }
    let total: usize = hits.iter().sum();
    let per_class = hits
        .iter()
        .zip(&counts)
        .map(|(&h, &n)| (n > 0).then(|| h as f64 / n as f64))
        .collect();
    Ok((total as f64 / data.len() as f64, per_class))
}

/// Evaluates arbitrary rasters, preprocessed with the model's input mean.
pub fn evaluate_cell<R: AsRef<Raster> + Sync>(
    model: &ModelCheckpoint,
    rasters: &[R],
    labels: Vec<usize>,
) -> Result<(f64, Vec<Option<f64>>)> {
    evaluate(model, &Batch::from_rasters(rasters, labels, model.meta.input_mean)?)
}

/// The `k` most probable classes with their softmax confidences.
pub fn top_k(model: &ModelCheckpoint, raster: &Raster, k: usize) -> Result<Vec<(usize, f64)>> {
    let mut x = crate::netcore::input::raster_input(raster);
    x.iter_mut().for_each(|v| *v -= model.meta.input_mean);
    let pass = model.forward_from(0, 1, &x)?;
    let probs = pass
        .probs()
        .ok_or_else(|| Error::Config("model has no softmax head".into()))?;
    let mut ranked: Vec<(usize, f64)> = probs.iter().copied().enumerate().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    Ok(ranked)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    #[serde(rename = "type")]
    pub kind: OcclusionType,
    pub level: u32,
    pub top1: f64,
    pub n: usize,
    pub per_class: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub classes: usize,
    pub rows: Vec<AccuracyRow>,
}

impl AccuracyTable {
    pub fn get(&self, kind: OcclusionType, level: u32) -> Option<&AccuracyRow> {
        self.rows.iter().find(|r| r.kind == kind && r.level == level)
    }

    pub fn top1(&self, kind: OcclusionType, level: u32) -> Option<f64> {
        self.get(kind, level).map(|r| r.top1)
    }

    /// `type,level,top1,n`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("type,level,top1,n\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{}", r.kind, r.level, r.top1, r.n);
        }
        s
    }

    pub fn to_ndjson(&self) -> String {
        self.rows
            .iter()
            .map(|r| serde_json::to_string(r).expect("row serializes") + "\n")
            .collect()
    }
}

/// Composes each grid cell of `base` on the fly and scores every model on
/// it. Cells are generated in cross-product mode, one at a time.
pub fn evaluate_grid(
    models: &[&ModelCheckpoint],
    base: &[&LabeledSample],
    grid: &Grid,
    bank: &OccluderBank,
    gray: Color,
    options: &ComposeOptions,
    seed: u64,
) -> Result<Vec<AccuracyTable>> {
    evaluate_grid_draws(models, base, grid, bank, gray, options, seed, 1)
}

/// Like [`evaluate_grid`], but every cell pools `draws` independent
/// compositions of `base` (occluder choice and placement re-drawn), which
/// shrinks the sampling noise of each accuracy. Draw 0 uses `seed` itself.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_grid_draws(
    models: &[&ModelCheckpoint],
    base: &[&LabeledSample],
    grid: &Grid,
    bank: &OccluderBank,
    gray: Color,
    options: &ComposeOptions,
    seed: u64,
    draws: usize,
) -> Result<Vec<AccuracyTable>> {
    if draws == 0 {
        return Err(Error::Config("at least one evaluation draw is needed".into()));
    }
    grid.validate()?;
    let mut tables: Vec<AccuracyTable> = models
        .iter()
        .map(|m| AccuracyTable {
            classes: m.num_classes(),
            rows: Vec::new(),
        })
        .collect();
    if base.is_empty() {
        return Ok(tables);
    }
    for (kind, level) in grid.cells() {
        let mut samples = Vec::with_capacity(base.len() * draws);
        for k in 0..draws {
            let draw_seed = if k == 0 { seed } else { derive_seed(seed, k as u64, purpose::PLACEMENT) };
            let ds = generate_imagined_dataset(base, &Grid::single(kind, level), bank, gray, options, draw_seed, AssignmentMode::CrossProduct)?;
            samples.extend(ds.samples);
        }
        let rasters: Vec<&Raster> = samples.iter().map(|s| &s.raster).collect();
        let labels: Vec<usize> = samples.iter().map(|s| s.class_id).collect();
        let raw = stack_inputs(&rasters);
        debug_assert_eq!(raw.len(), labels.len() * INPUT_WIDTH);
        for (m, table) in models.iter().zip(tables.iter_mut()) {
            let mean = m.meta.input_mean;
            let batch = Batch {
                inputs: raw.iter().map(|v| v - mean).collect(),
                labels: labels.clone(),
            };
            let (top1, per_class) = evaluate(m, &batch)?;
            table.rows.push(AccuracyRow {
                kind,
                level,
                top1,
                n: labels.len(),
                per_class,
            });
        }
    }
    Ok(tables)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDelta {
    pub class: usize,
    pub acc_a: f64,
    pub delta: f64,
}

/// Per-class `b - a` at one cell, sorted by `a`'s accuracy (descending,
/// ties by class id). Classes absent from the cell are skipped.
pub fn per_class_delta(a: &AccuracyTable, b: &AccuracyTable, kind: OcclusionType, level: u32) -> Result<Vec<ClassDelta>> {
    if a.classes != b.classes {
        return Err(Error::Schema(format!("{} classes vs {}", a.classes, b.classes)));
    }
    let ra = a
        .get(kind, level)
        .ok_or_else(|| Error::Schema(format!("first table lacks {kind} {level}")))?;
    let rb = b
        .get(kind, level)
        .ok_or_else(|| Error::Schema(format!("second table lacks {kind} {level}")))?;
    if ra.per_class.len() != rb.per_class.len() {
        return Err(Error::Schema("per-class vectors differ in length".into()));
    }
    let mut out = Vec::new();
    for (class, (pa, pb)) in ra.per_class.iter().zip(&rb.per_class).enumerate() {
        match (pa, pb) {
            (Some(x), Some(y)) => out.push(ClassDelta {
                class,
                acc_a: *x,
                delta: y - x,
            }),
            (None, None) => {}
            _ => return Err(Error::Schema(format!("class {class} present in only one table"))),
        }
    }
    out.sort_by(|p, q| q.acc_a.total_cmp(&p.acc_a).then(p.class.cmp(&q.class)));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::ModelSpec;

    fn table(per_class: Vec<Option<f64>>) -> AccuracyTable {
        let known: Vec<f64> = per_class.iter().flatten().copied().collect();
        AccuracyTable {
            classes: per_class.len(),
            rows: vec![AccuracyRow {
                kind: OcclusionType::InDomain,
                level: 40,
                top1: known.iter().sum::<f64>() / known.len() as f64,
                n: 10,
                per_class,
            }],
        }
    }

    #[test]
    fn constructed_deltas() {
        let a = table(vec![Some(1.0), Some(0.0)]);
        let b = table(vec![Some(0.5), Some(0.5)]);
        let d = per_class_delta(&a, &b, OcclusionType::InDomain, 40).unwrap();
        assert_eq!(d[0], ClassDelta { class: 0, acc_a: 1.0, delta: -0.5 });
        assert_eq!(d[1], ClassDelta { class: 1, acc_a: 0.0, delta: 0.5 });
        let mean: f64 = d.iter().map(|x| x.delta).sum::<f64>() / 2.0;
        assert!((mean - (b.rows[0].top1 - a.rows[0].top1)).abs() < 1e-12);
    }

    #[test]
    fn identical_tables_zero_delta() {
        let a = table(vec![Some(0.3), Some(0.9), Some(0.1)]);
        let d = per_class_delta(&a, &a, OcclusionType::InDomain, 40).unwrap();
        assert!(d.iter().all(|x| x.delta == 0.0));
        assert_eq!(d.iter().map(|x| x.class).collect::<Vec<_>>(), vec![1, 0, 2]);
    }

    #[test]
    fn class_mismatch_is_schema_error() {
        let a = table(vec![Some(0.3), Some(0.9)]);
        let b = table(vec![Some(0.3), Some(0.9), Some(0.1)]);
        assert!(matches!(per_class_delta(&a, &b, OcclusionType::InDomain, 40), Err(Error::Schema(_))));
        assert!(per_class_delta(&a, &a, OcclusionType::GrayRect, 40).is_err());
    }

    #[test]
    fn zero_model_hits_class_zero_only() {
        let m = ModelCheckpoint::zeros(ModelSpec::classifier(vec![1024, 8, 4])).unwrap();
        let rasters: Vec<Raster> = (0..8).map(|i| Raster::filled(20, 20, Color::gray(i * 30))).collect();
        let labels = vec![0, 1, 2, 3, 0, 1, 2, 3];
        let (top1, per_class) = evaluate_cell(&m, &rasters, labels).unwrap();
        assert_eq!(top1, 0.25);
        assert_eq!(per_class, vec![Some(1.0), Some(0.0), Some(0.0), Some(0.0)]);
    }

    #[test]
    fn csv_layout() {
        let t = table(vec![Some(0.5), Some(0.5)]);
        assert_eq!(t.to_csv(), "type,level,top1,n\nindomain,40,0.5,10\n");
        assert!(t.to_ndjson().contains("\"type\":\"indomain\""));
    }

    #[test]
    fn top_k_sorted() {
        let m = ModelCheckpoint::init(ModelSpec::classifier(vec![1024, 8, 5]), 3).unwrap();
        let r = top_k(&m, &Raster::filled(10, 10, Color::gray(90)), 3).unwrap();
        assert_eq!(r.len(), 3);
        assert!(r[0].1 >= r[1].1 && r[1].1 >= r[2].1);
    }
    #[test]
    fn draws_pool_independent_compositions() {
        use crate::corpus::{crop_corpus, generate_glyph_corpus, CorpusConfig};
        let c = crop_corpus(
            &generate_glyph_corpus(&CorpusConfig {
                classes: 2,
                per_class: 10,
                image_size: 32,
                seed: 4,
            })
            .unwrap(),
        )
        .unwrap();
        let base: Vec<_> = c.samples.iter().collect();
        let m = ModelCheckpoint::init(ModelSpec::classifier(vec![1024, 8, 2]), 1).unwrap();
        let grid = Grid::single(OcclusionType::GrayRect, 50);
        let args = (&grid, &OccluderBank::default(), Color::gray(80), &ComposeOptions::default());
        let one = evaluate_grid(&[&m], &base, args.0, args.1, args.2, args.3, 9).unwrap();
        let same = evaluate_grid_draws(&[&m], &base, args.0, args.1, args.2, args.3, 9, 1).unwrap();
        assert_eq!(one, same);
        let three = evaluate_grid_draws(&[&m], &base, args.0, args.1, args.2, args.3, 9, 3).unwrap();
        assert_eq!(three[0].rows[0].n, 3 * base.len());
        assert!(evaluate_grid_draws(&[&m], &base, args.0, args.1, args.2, args.3, 9, 0).is_err());
    }
}
