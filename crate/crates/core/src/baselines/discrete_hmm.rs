use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

const STOCHASTIC_TOL: f64 = 1e-12;

/// Hidden Markov model with categorical emissions.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteHmm {
    initial: Vec<f64>,
    transition: Matrix,
    emission: Matrix,
}

fn check_distribution(what: &str, row: &[f64]) -> Result<()> {
    if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::InvalidArgument(format!("{what} has a negative or non-finite entry")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::InvalidArgument(format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}

/// Exact filtering output for one symbol sequence.
#[derive(Debug, Clone)]
pub struct DiscreteFilterOutput {
    /// `P(state_t | x_1..x_t)` for `t = 1..T`.
    pub posteriors: Vec<Vec<f64>>,
    /// `P(x_{t+1} | x_1..x_t)` for `t = 1..T`.
    pub predictives: Vec<Vec<f64>>,
    /// `P(x_1)` before any observation.
    pub prior_predictive: Vec<f64>,
    pub log_likelihood: f64,
}

impl DiscreteHmm {
    pub fn new(initial: Vec<f64>, transition: Matrix, emission: Matrix) -> Result<Self> {
        let n = initial.len();
        if n == 0 {
            return Err(Error::InvalidArgument("HMM needs at least one state".into()));
        }
        if transition.shape() != (n, n) {
            return Err(Error::dims("transition rows", n, transition.rows()));
        }
        if emission.rows() != n || emission.cols() == 0 {
            return Err(Error::dims("emission rows", n, emission.rows()));
        }
        check_distribution("initial distribution", &initial)?;
        for i in 0..n {
            check_distribution(&format!("transition row {i}"), transition.row(i))?;
            check_distribution(&format!("emission row {i}"), emission.row(i))?;
        }
        Ok(DiscreteHmm {
            initial,
            transition,
            emission,
        })
    }

    pub fn n_states(&self) -> usize {
        self.initial.len()
    }

    pub fn n_symbols(&self) -> usize {
        self.emission.cols()
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn transition(&self) -> &Matrix {
        &self.transition
    }

    pub fn emission(&self) -> &Matrix {
        &self.emission
    }

    /// Distribution over symbols given a distribution over states.
    pub fn symbol_distribution(&self, state_dist: &[f64]) -> Vec<f64> {
        self.emission.tmul_vec(state_dist).expect("state distribution length")
    }

    fn advance(&self, state_dist: &[f64]) -> Vec<f64> {
        let mut next = self.transition.tmul_vec(state_dist).expect("state distribution length");
        normalize(&mut next);
        next
    }

    /// Exact forward filtering with per-step normalization.
    pub fn filter(&self, symbols: &[usize]) -> Result<DiscreteFilterOutput> {
        let mut prior = self.initial.clone();
        let prior_predictive = self.symbol_distribution(&prior);
        let mut posteriors = Vec::with_capacity(symbols.len());
        let mut predictives = Vec::with_capacity(symbols.len());
        let mut log_likelihood = 0.0;
        for (t, &x) in symbols.iter().enumerate() {
            if x >= self.n_symbols() {
                return Err(Error::InvalidArgument(format!(
                    "symbol {x} at position {} outside 0..{}",
                    t + 1,
                    self.n_symbols()
                )));
            }
            let mut post: Vec<f64> = prior
                .iter()
                .enumerate()
                .map(|(s, &p)| p * self.emission[(s, x)])
                .collect();
            let evidence: f64 = post.iter().sum();
            if evidence <= 0.0 {
                return Err(Error::ZeroProbabilityObservation {
                    position: t + 1,
                    symbol: x,
                });
            }
            log_likelihood += evidence.ln();
            post.iter_mut().for_each(|p| *p /= evidence);
            normalize(&mut post);
            prior = self.advance(&post);
            predictives.push(self.symbol_distribution(&prior));
            posteriors.push(post);
        }
        Ok(DiscreteFilterOutput {
            posteriors,
            predictives,
            prior_predictive,
            log_likelihood,
        })
    }

    /// Samples one path; returns `(states, symbols)`.
    pub fn sample(&self, len: usize, rng: &mut Rng) -> (Vec<usize>, Vec<usize>) {
        let mut states = Vec::with_capacity(len);
        let mut symbols = Vec::with_capacity(len);
        let mut s = rng.categorical(&self.initial);
        for t in 0..len {
            if t > 0 {
                s = rng.categorical(self.transition.row(s));
            }
            states.push(s);
            symbols.push(rng.categorical(self.emission.row(s)));
        }
        (states, symbols)
    }
}

/// `discrete_filter` as a free function.
pub fn discrete_filter(model: &DiscreteHmm, symbols: &[usize]) -> Result<DiscreteFilterOutput> {
    model.filter(symbols)
}

fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|p| *p /= s);
    }
}
