//! Losses and their gradients.

const PROB_FLOOR: f64 = 1e-12;

/// Row-wise numerically stable softmax.
pub fn softmax(logits: &[f64], width: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks_exact(width) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        let mut sum = 0.0;
        for &z in row {
            let e = (z - max).exp();
            sum += e;
            out.push(e);
        }
        for p in &mut out[start..] {
            *p /= sum;
        }
    }
    out
}

/// Mean multinomial logistic loss, with probabilities floored at 1e-12.
pub fn nll_loss(probs: &[f64], width: usize, labels: &[usize]) -> f64 {
    let n = labels.len();
    let total: f64 = probs
        .chunks_exact(width)
        .zip(labels)
        .map(|(row, &y)| -row[y].max(PROB_FLOOR).ln())
        .sum();
    total / n as f64
}

/// Gradient of [`nll_loss`] after softmax, with respect to the logits.
pub fn softmax_nll_grad(probs: &[f64], width: usize, labels: &[usize]) -> Vec<f64> {
    let n = labels.len() as f64;
    let mut g: Vec<f64> = probs.iter().map(|p| p / n).collect();
    for (r, &y) in labels.iter().enumerate() {
        g[r * width + y] -= 1.0 / n;
    }
    g
}

/// Mean squared error over every element.
pub fn mse_loss(output: &[f64], target: &[f64]) -> f64 {
    let s: f64 = output.iter().zip(target).map(|(o, t)| (o - t) * (o - t)).sum();
    s / output.len() as f64
}

pub fn mse_grad(output: &[f64], target: &[f64]) -> Vec<f64> {
    let scale = 2.0 / output.len() as f64;
    output.iter().zip(target).map(|(o, t)| scale * (o - t)).collect()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_four_classes() {
        let p = vec![0.25; 4];
        assert!((nll_loss(&p, 4, &[2]) - 4f64.ln()).abs() < 1e-12);
        assert!((nll_loss(&p, 4, &[2]) - 1.386294).abs() < 1e-6);
    }

    #[test]
    fn perfect_prediction_is_zero() {
        assert_eq!(nll_loss(&[0.0, 1.0, 0.0], 3, &[1]), 0.0);
    }

    #[test]
    fn two_class_value() {
        // -ln 0.7
        assert!((nll_loss(&[0.7, 0.3], 2, &[0]) - 0.356675).abs() < 1e-6);
    }

    #[test]
    fn zero_probability_is_floored() {
        let l = nll_loss(&[1.0, 0.0], 2, &[1]);
        assert!((l - 1e-12f64.ln().abs()).abs() < 1e-9);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let z = vec![1000.0, 999.0, -5.0, 0.0, 0.0, 0.0];
        let p = softmax(&z, 3);
        for row in p.chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn argmax_ties_lowest() {
        assert_eq!(argmax(&[0.1, 0.1, 0.1]), 0);
        assert_eq!(argmax(&[0.1, 0.3, 0.3]), 1);
    }
}
