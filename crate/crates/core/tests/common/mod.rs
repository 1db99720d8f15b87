#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vector(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
}

/// Nonsymmetric matrix with entries U(-1, 1) / sqrt(n) plus `shift * I`.
pub fn random_matrix(n: usize, shift: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let s = 1.0 / (n as f64).sqrt();
    let mut m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0) * s);
    for i in 0..n {
        m[(i, i)] += shift;
    }
    m
}

pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

pub fn mat_rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
