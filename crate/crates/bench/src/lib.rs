//! Fixtures shared by the benchmarks.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n x d` matrix with entries uniform in `[-1, 1)`.
pub fn uniform_matrix(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0))
}

/// Rows of `n x c` probabilities.
pub fn random_proba(n: usize, c: usize, seed: u64) -> Array2<f64> {
    let mut m = uniform_matrix(n, c, seed).mapv(|v| v.exp());
    for mut row in m.rows_mut() {
        let s = row.sum();
        row /= s;
    }
    m
}
