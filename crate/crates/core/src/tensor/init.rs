use alloc::vec::Vec;

use rand::distr::{Distribution, Uniform};
use rand::RngCore;

use super::Real;

/// Half-width of the Xavier/Glorot uniform range for a `fan_in x fan_out`
/// matrix.
pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    libm::sqrt(6.0 / (fan_in + fan_out) as f64)
}

/// Xavier-uniform values for a `rows x cols` matrix. Single-row shapes are
/// biases and start at zero.
pub fn xavier_uniform<T: Real, R: RngCore + ?Sized>(
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> Vec<T> {
    if rows <= 1 || cols == 0 {
        return alloc::vec![T::ZERO; rows * cols];
    }
    let bound = xavier_bound(rows, cols);
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    (0..rows * cols)
        .map(|_| T::from_f64(dist.sample(rng)))
        .collect()
}
