use crate::error::{Error, Result};

/// How the mixing probability decays over the mixing iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnnealSchedule {
    /// `α_i = α₀·(1 − i/N)`.
    Linear,
    /// `α_i = α₀`.
    Constant,
    /// `α_i = α₀·rate^i`.
    Exponential { rate: f64 },
}

impl AnnealSchedule {
    /// Mixing probability at iteration `i` of `total`.
    pub fn alpha(&self, alpha0: f64, i: usize, total: usize) -> f64 {
        match *self {
            AnnealSchedule::Linear if total == 0 => alpha0,
            AnnealSchedule::Linear => alpha0 * (1.0 - i as f64 / total as f64),
            AnnealSchedule::Constant => alpha0,
            AnnealSchedule::Exponential { rate } => alpha0 * rate.powi(i.min(i32::MAX as usize) as i32),
        }
    }
}

/// Regression target used when fitting the projection operators `D_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionTarget {
    /// Regress onto the filtered state `2^j` steps later. Chained
    /// projections then stay on the states the next operator was fit to.
    FilteredState,
    /// Regress onto the future observation pulled back through the frozen
    /// decoder (minimum-norm preimage), which minimizes the decoded error of
    /// a single projection exactly.
    PulledBackObservation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// SGD steps per timestep stage during initialization; 0 keeps the
    /// averaged starting point.
    pub updates_per_timestep: usize,
    /// Candidate steps of conditional training + stochastic mixing.
    pub mixing_iterations: usize,
    /// Step size of conditional training; `None` reuses `learning_rate`.
    pub mixing_learning_rate: Option<f64>,
    pub alpha0: f64,
    pub anneal: AnnealSchedule,
    pub window: usize,
    pub state_dim: usize,
    pub ridge_lambda_d: f64,
    pub projection_target: ProjectionTarget,
    /// Global-norm gradient clip in conditional training.
    pub clip_norm: f64,
    /// Standard deviation of the random initial weights.
    pub init_stddev: f64,
    /// Loss is recorded every this many updates (plus first and last).
    pub record_every: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(state_dim: usize, seed: u64) -> Self {
        TrainConfig {
            learning_rate: 0.001,
            updates_per_timestep: 500,
            mixing_iterations: 500,
            mixing_learning_rate: None,
            alpha0: 0.9,
            anneal: AnnealSchedule::Linear,
            window: 2,
            state_dim,
            ridge_lambda_d: 1e-6,
            projection_target: ProjectionTarget::FilteredState,
            clip_norm: 10.0,
            init_stddev: crate::spr::DEFAULT_INIT_STDDEV,
            record_every: 50,
            seed,
        }
    }

    pub fn mixing_rate(&self) -> f64 {
        self.mixing_learning_rate.unwrap_or(self.learning_rate)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        if let Some(r) = self.mixing_learning_rate {
            if !(r >= 0.0) || !r.is_finite() {
                return bad("mixing_learning_rate must be nonnegative");
            }
        }
        if !(0.0..=1.0).contains(&self.alpha0) {
            return bad("alpha0 must lie in [0, 1]");
        }
        if let AnnealSchedule::Exponential { rate } = self.anneal {
            if !(0.0..=1.0).contains(&rate) {
                return bad("exponential anneal rate must lie in [0, 1]");
            }
        }
        if self.window == 0 || self.state_dim == 0 || self.record_every == 0 {
            return bad("window, state_dim and record_every must be at least 1");
        }
        if !(self.ridge_lambda_d >= 0.0) || !self.ridge_lambda_d.is_finite() {
            return bad("ridge_lambda_d must be nonnegative");
        }
        if !(self.clip_norm > 0.0) {
            return bad("clip_norm must be positive");
        }
        if !(self.init_stddev >= 0.0) || !self.init_stddev.is_finite() {
            return bad("init_stddev must be nonnegative");
        }
        Ok(())
    }
}
