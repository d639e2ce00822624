//! Comparison models: LINEAR-k autoregression, Gaussian HMM, the zero
//! (training mean) predictor, and the exact discrete HMM filter used as a
//! Bayes-optimal reference on the toy processes.

mod discrete_hmm;
mod gaussian_hmm;
mod linear_ar;

pub use discrete_hmm::{discrete_filter, DiscreteFilterOutput, DiscreteHmm};
pub use gaussian_hmm::{
    hmm_em_fit, hmm_predict, EmConfig, EmFit, GaussianHmm, DEFAULT_VARIANCE_FLOOR, HMM_MAGIC,
};
pub use linear_ar::{
    fit_linear_ar, fit_linear_ar_selected, LinearArModel, LinearWeights, DEFAULT_LAMBDA_GRID,
    LINEAR_MAGIC,
};

/// Predicts the zero vector, i.e. the training mean after normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AveragePredictor {
    pub obs_dim: usize,
}

impl AveragePredictor {
    pub fn predict(&self) -> Vec<f64> {
        vec![0.0; self.obs_dim]
    }
}
