//! Small dense linear algebra, the logistic nonlinearity, ridge regression
//! and seeded random numbers.

mod linalg;
mod matrix;
mod rng;

pub use linalg::{pullback_rows, ridge_solve, ridge_with_intercept, Cholesky};
pub use matrix::{axpy, dot, norm, squared_distance, Matrix};
pub use rng::{gaussian_draws, Rng};

/// Inputs are clamped to this magnitude before exponentiation.
pub const LOGISTIC_INPUT_LIMIT: f64 = 709.0;

// Largest double strictly below one.
const ONE_BELOW: f64 = 1.0 - f64::EPSILON / 2.0;

/// `1 / (1 + e^{-y})`, kept strictly inside `(0, 1)`.
#[inline]
pub fn logistic_scalar(y: f64) -> f64 {
    let y = y.clamp(-LOGISTIC_INPUT_LIMIT, LOGISTIC_INPUT_LIMIT);
    (1.0 / (1.0 + (-y).exp())).min(ONE_BELOW)
}

pub fn logistic(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&y| logistic_scalar(y)).collect()
}

pub fn logistic_in_place(v: &mut [f64]) {
    v.iter_mut().for_each(|y| *y = logistic_scalar(*y));
}
