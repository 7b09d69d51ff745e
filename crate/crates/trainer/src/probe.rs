//! Multinomial logistic regression on frozen features.

use fastdecor::Matrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TrainError};

const MAX_ITERS: usize = 3000;
const GRAD_TOL: f64 = 1e-6;
const L2: f64 = 1e-4;

/// Held-out top-1 accuracy of a linear softmax classifier.
///
/// Rows are shuffled with `seed`, the last `heldout_fraction` of them are
/// held out, features are standardized with training-split statistics, and
/// the weights are fit by full-batch gradient descent with step `1 / L`
/// (`L` bounds the curvature of the loss) until the gradient norm falls
/// below `1e-6` or 3000 iterations pass.
pub fn linear_probe(features: &Matrix, labels: &[usize], heldout_fraction: f64, seed: u64) -> Result<f64> {
    let n = features.rows();
    if labels.len() != n {
        return Err(TrainError::Data(format!("{} labels for {n} rows", labels.len())));
    }
    if !(heldout_fraction > 0.0 && heldout_fraction < 1.0) {
        return Err(TrainError::Config(format!("heldout fraction must be in (0, 1), got {heldout_fraction}")));
    }
    let classes = labels.iter().max().map_or(0, |&c| c + 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((n as f64) * heldout_fraction).round() as usize;
    let (train_idx, test_idx) = order.split_at(n - n_test.min(n));
    for (name, split) in [("training", train_idx), ("held-out", test_idx)] {
        let mut present = vec![false; classes];
        split.iter().for_each(|&i| present[labels[i]] = true);
        let count = present.iter().filter(|&&p| p).count();
        if count < 2 {
            return Err(TrainError::Data(format!("{name} split has {count} classes, need at least 2")));
        }
        if name == "training" && count < classes {
            return Err(TrainError::Data("a class is missing from the training split".into()));
        }
    }

    let (xtr, ytr) = split_rows(features, labels, train_idx);
    let (xte, yte) = split_rows(features, labels, test_idx);
    let (mean, scale) = column_stats(&xtr);
    let xtr = with_bias(&xtr, &mean, &scale);
    let xte = with_bias(&xte, &mean, &scale);

    let weights = fit_softmax(&xtr, &ytr, classes);
    let scores = xte.matmul(&weights);
    let correct = (0..scores.rows()).filter(|&k| argmax(scores.row(k)) == yte[k]).count();
    Ok(correct as f64 / yte.len() as f64)
}

fn split_rows(x: &Matrix, labels: &[usize], idx: &[usize]) -> (Matrix, Vec<usize>) {
    (Matrix::from_fn(idx.len(), x.cols(), |k, j| x[(idx[k], j)]), idx.iter().map(|&i| labels[i]).collect())
}

fn column_stats(x: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = x.rows() as f64;
    let mut mean = vec![0.0; x.cols()];
    let mut sq = vec![0.0; x.cols()];
    for k in 0..x.rows() {
        for (j, &v) in x.row(k).iter().enumerate() {
            mean[j] += v;
            sq[j] += v * v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let scale = sq.iter().zip(&mean).map(|(s, m)| (s / n - m * m).max(0.0).sqrt()).map(|s| if s > 1e-12 { s } else { 1.0 }).collect();
    (mean, scale)
}

/// Standardized features with a trailing constant column.
fn with_bias(x: &Matrix, mean: &[f64], scale: &[f64]) -> Matrix {
    let d = x.cols();
    Matrix::from_fn(x.rows(), d + 1, |k, j| if j == d { 1.0 } else { (x[(k, j)] - mean[j]) / scale[j] })
}

fn argmax(row: &[f64]) -> usize {
    row.iter().enumerate().fold(0, |best, (j, &v)| if v > row[best] { j } else { best })
}

/// Largest eigenvalue of `X^T X / n` by power iteration.
fn curvature_bound(x: &Matrix) -> f64 {
    let n = x.rows() as f64;
    let mut v = Matrix::from_fn(x.cols(), 1, |j, _| 1.0 + (j % 3) as f64);
    let mut lambda = 1.0;
    for _ in 0..50 {
        let w = x.matmul_tn(&x.matmul(&v));
        let norm = w.as_slice().iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 1.0;
        }
        lambda = norm / n / v.as_slice().iter().map(|a| a * a).sum::<f64>().sqrt();
        v = w.map(|a| a / norm);
    }
    lambda
}

fn fit_softmax(x: &Matrix, y: &[usize], classes: usize) -> Matrix {
    let n = x.rows() as f64;
    // softmax cross-entropy has Hessian bounded by lambda_max(X^T X / n) / 2
    let step = 1.0 / (0.5 * curvature_bound(x) * 1.05 + L2);
    let mut w = Matrix::zeros(x.cols(), classes);
    for _ in 0..MAX_ITERS {
        let mut p = x.matmul(&w);
        for k in 0..p.rows() {
            let row = p.row_mut(k);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            row.iter_mut().for_each(|v| *v /= total);
            row[y[k]] -= 1.0;
        }
        let mut grad = x.matmul_tn(&p);
        grad.scale(1.0 / n);
        grad.add_scaled(&w, L2);
        let norm = grad.as_slice().iter().map(|g| g * g).sum::<f64>().sqrt();
        w.add_scaled(&grad, -step);
        if norm < GRAD_TOL {
            break;
        }
    }
    w
}
