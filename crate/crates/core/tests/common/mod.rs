#![allow(dead_code)]

use fastdecor::{EmbeddingBatch, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_matrix(n: usize, d: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_batch(n: usize, d: usize, seed: u64) -> EmbeddingBatch {
    EmbeddingBatch::new(random_matrix(n, d, seed)).unwrap()
}

/// `|got - want| / |want|`, or `|got|` when `want` is exactly zero.
pub fn rel_err(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        (got - want).abs() / want.abs()
    }
}
