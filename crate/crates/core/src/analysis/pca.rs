//! Principal components via cyclic Jacobi rotations.

use serde::{Deserialize, Serialize};

use super::features::KahanSum;
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Eigenvalues (descending) and matching unit eigenvectors of a symmetric
/// `n x n` matrix. Rotations visit `(p, q)` pairs in row-major order.
pub fn symmetric_eigen(matrix: &[f64], n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    assert_eq!(matrix.len(), n * n);
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; n * n];
    (0..n).for_each(|i| v[i * n + i] = 1.0);
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| a[p * n + q] * a[p * n + q])
            .sum::<f64>()
            .sqrt();
        if off <= f64::EPSILON * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = order
        .iter()
        .map(|&i| sign_normalized((0..n).map(|k| v[k * n + i]).collect()))
        .collect();
    (values, vectors)
}

/// Flips `v` so its largest-magnitude entry (first on ties) is positive.
fn sign_normalized(mut v: Vec<f64>) -> Vec<f64> {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

/// A fitted projection, reused unchanged for every level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub mean: Vec<f64>,
    /// `k` unit components, each of the input width.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    /// Share of total variance carried by each component.
    pub explained: Vec<f64>,
}

/// Fits the top `k` components of `rows` (row-major, `width` wide).
pub fn pca_fit(rows: &[f64], width: usize, k: usize) -> Result<Projection> {
    if width == 0 || !rows.len().is_multiple_of(width) {
        return Err(Error::Shape("rows do not match width".into()));
    }
    let n = rows.len() / width;
    if n < k + 1 {
        return Err(Error::Rank { needed: k, found: n.saturating_sub(1) });
    }
    let mut mean_acc = vec![KahanSum::default(); width];
    for r in rows.chunks_exact(width) {
        mean_acc.iter_mut().zip(r).for_each(|(a, &v)| a.add(v));
    }
    let mean: Vec<f64> = mean_acc.iter().map(|a| a.value() / n as f64).collect();
    let mut cov = vec![0.0; width * width];
    for i in 0..width {
        for j in i..width {
            let mut acc = KahanSum::default();
            for r in rows.chunks_exact(width) {
                acc.add((r[i] - mean[i]) * (r[j] - mean[j]));
            }
            let c = acc.value() / (n - 1) as f64;
            cov[i * width + j] = c;
            cov[j * width + i] = c;
        }
    }
    let (values, vectors) = symmetric_eigen(&cov, width);
    let total: f64 = values.iter().map(|v| v.max(0.0)).sum();
    let tol = 1e-12 * total.max(f64::MIN_POSITIVE);
    let rank = values.iter().filter(|&&v| v > tol).count();
    if rank < k {
        return Err(Error::Rank { needed: k, found: rank });
    }
    Ok(Projection {
        mean,
        components: vectors.into_iter().take(k).collect(),
        eigenvalues: values[..k].to_vec(),
        explained: values[..k].iter().map(|v| v / total).collect(),
    })
}

/// Coordinates of each row in the fitted basis.
pub fn pca_project(proj: &Projection, rows: &[f64]) -> Result<Vec<Vec<f64>>> {
    let width = proj.mean.len();
    if !rows.len().is_multiple_of(width) {
        return Err(Error::Shape(format!("rows are not {width} wide")));
    }
    Ok(rows
        .chunks_exact(width)
        .map(|r| {
            proj.components
                .iter()
                .map(|c| c.iter().zip(r.iter().zip(&proj.mean)).map(|(a, (x, m))| a * (x - m)).sum())
                .collect()
        })
        .collect())
}
