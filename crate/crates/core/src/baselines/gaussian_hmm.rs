use rayon::prelude::*;

use crate::codec::{Decoder, Encoder};
use crate::datasets::{common_obs_dim, Sequence};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

pub const HMM_MAGIC: &[u8; 4] = b"GHMM";

/// Smallest per-dimension emission variance EM may produce.
pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-4;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Hidden Markov model with diagonal-covariance Gaussian emissions.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianHmm {
    initial: Vec<f64>,
    transition: Matrix,
    means: Matrix,
    variances: Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig {
    pub n_states: usize,
    pub iterations: usize,
    pub variance_floor: f64,
    /// Independent random initializations; the best final likelihood wins.
    pub restarts: usize,
}

impl EmConfig {
    pub fn new(n_states: usize) -> Self {
        EmConfig {
            n_states,
            iterations: 50,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
            restarts: 1,
        }
    }
}

/// Result of [`hmm_em_fit`]: the model and the total log-likelihood of the
/// training data before each EM iteration plus once after the last one.
#[derive(Debug, Clone)]
pub struct EmFit {
    pub model: GaussianHmm,
    pub log_likelihoods: Vec<f64>,
}

impl GaussianHmm {
    pub fn new(initial: Vec<f64>, transition: Matrix, means: Matrix, variances: Matrix) -> Result<Self> {
        let n = initial.len();
        if n == 0 {
            return Err(Error::InvalidArgument("HMM needs at least one state".into()));
        }
        if transition.shape() != (n, n) {
            return Err(Error::dims("HMM transition rows", n, transition.rows()));
        }
        if means.rows() != n || variances.shape() != means.shape() {
            return Err(Error::dims("HMM emission rows", n, means.rows()));
        }
        let stochastic = |v: &[f64]| v.iter().all(|p| *p >= 0.0) && (v.iter().sum::<f64>() - 1.0).abs() < 1e-12;
        if !stochastic(&initial) || !(0..n).all(|i| stochastic(transition.row(i))) {
            return Err(Error::InvalidArgument(
                "HMM initial and transition rows must be probability vectors".into(),
            ));
        }
        if !means.is_finite() || variances.as_slice().iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "HMM means must be finite and variances positive".into(),
            ));
        }
        Ok(GaussianHmm {
            initial,
            transition,
            means,
            variances,
        })
    }

    pub fn n_states(&self) -> usize {
        self.initial.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.means.cols()
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn transition(&self) -> &Matrix {
        &self.transition
    }

    pub fn means(&self) -> &Matrix {
        &self.means
    }

    pub fn variances(&self) -> &Matrix {
        &self.variances
    }

    fn log_emission(&self, x: &[f64], out: &mut [f64]) {
        for (s, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for ((v, m), var) in x.iter().zip(self.means.row(s)).zip(self.variances.row(s)) {
                acc += LN_2PI + var.ln() + (v - m) * (v - m) / var;
            }
            *o = -0.5 * acc;
        }
    }

    /// Scaled forward pass over `x_1..x_t` with emission likelihoods shifted
    /// by their per-step maximum.
    fn forward(&self, seq: &Sequence, upto: usize) -> Result<Forward> {
        let n = self.n_states();
        let mut alpha = Matrix::zeros(upto, n);
        let mut emit = Matrix::zeros(upto, n);
        let mut log_scale = Vec::with_capacity(upto);
        let mut scale = Vec::with_capacity(upto);
        let mut logb = vec![0.0; n];
        for t in 0..upto {
            self.log_emission(seq.x(t + 1), &mut logb);
            let prior = if t == 0 {
                self.initial.clone()
            } else {
                self.transition.tmul_vec(alpha.row(t - 1))?
            };
            // Shift by the best reachable state so that one term is exactly
            // its prior, however far the observation lies from every mean.
            let shift = logb
                .iter()
                .zip(&prior)
                .filter(|(_, p)| **p > 0.0)
                .map(|(l, _)| *l)
                .fold(f64::NEG_INFINITY, f64::max);
            for ((e, l), p) in emit.row_mut(t).iter_mut().zip(&logb).zip(&prior) {
                *e = if *p > 0.0 { (l - shift).exp() } else { 0.0 };
            }
            let row = alpha.row_mut(t);
            let mut c = 0.0;
            for ((a, p), e) in row.iter_mut().zip(&prior).zip(emit.row(t)) {
                *a = p * e;
                c += *a;
            }
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::non_finite("HMM forward pass"));
            }
            row.iter_mut().for_each(|a| *a /= c);
            scale.push(c);
            log_scale.push(c.ln() + shift);
        }
        Ok(Forward {
            alpha,
            emit,
            scale,
            log_scale,
        })
    }

    /// Log-likelihood of one sequence.
    pub fn log_likelihood(&self, seq: &Sequence) -> Result<f64> {
        self.check_dim(seq)?;
        Ok(self.forward(seq, seq.len())?.log_scale.iter().sum())
    }

    /// Posterior over the hidden state at `t` given `x_1..x_t`.
    pub fn filter(&self, seq: &Sequence, t: usize) -> Result<Vec<f64>> {
        self.check_dim(seq)?;
        if t == 0 || t > seq.len() {
            return Err(Error::HorizonOutOfRange(format!("prefix {t} outside 1..={}", seq.len())));
        }
        Ok(self.forward(seq, t)?.alpha.row(t - 1).to_vec())
    }

    /// Expected observation `k` steps after a state distribution.
    pub fn predict_from_posterior(&self, posterior: &[f64], k: usize) -> Result<Vec<f64>> {
        if posterior.len() != self.n_states() {
            return Err(Error::dims("HMM posterior", self.n_states(), posterior.len()));
        }
        let mut p = posterior.to_vec();
        if k <= 64 {
            for _ in 0..k {
                p = self.transition.tmul_vec(&p)?;
            }
        } else {
            p = self.transition.pow(k as u64)?.tmul_vec(&p)?;
        }
        self.means.tmul_vec(&p)
    }

    fn check_dim(&self, seq: &Sequence) -> Result<()> {
        if seq.obs_dim() != self.obs_dim() {
            return Err(Error::dims("HMM observation", self.obs_dim(), seq.obs_dim()));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new(HMM_MAGIC);
        enc.u64(self.n_states() as u64)
            .u64(self.obs_dim() as u64)
            .f64s(&self.initial)
            .matrix(&self.transition)
            .matrix(&self.means)
            .matrix(&self.variances);
        enc.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut dec = Decoder::new(bytes, HMM_MAGIC)?;
        let n = dec.dim("state count")?;
        let d = dec.dim("obs_dim")?;
        let initial = dec.f64s(n, "initial distribution")?;
        let transition = dec.matrix(n, n, "transition")?;
        let means = dec.matrix(n, d, "means")?;
        let variances = dec.matrix(n, d, "variances")?;
        let at = dec.offset();
        dec.finish()?;
        GaussianHmm::new(initial, transition, means, variances).map_err(|e| Error::CorruptModelFile {
            offset: at,
            reason: e.to_string(),
        })
    }
}

struct Forward {
    alpha: Matrix,
    emit: Matrix,
    scale: Vec<f64>,
    log_scale: Vec<f64>,
}

/// Sufficient statistics from one sequence's E-step.
struct Stats {
    log_likelihood: f64,
    first: Vec<f64>,
    transitions: Matrix,
    weight: Vec<f64>,
    sum_x: Matrix,
    sum_xx: Matrix,
}

impl Stats {
    fn zeros(n: usize, d: usize) -> Self {
        Stats {
            log_likelihood: 0.0,
            first: vec![0.0; n],
            transitions: Matrix::zeros(n, n),
            weight: vec![0.0; n],
            sum_x: Matrix::zeros(n, d),
            sum_xx: Matrix::zeros(n, d),
        }
    }

    fn add(&mut self, other: &Stats) {
        self.log_likelihood += other.log_likelihood;
        self.first.iter_mut().zip(&other.first).for_each(|(a, b)| *a += b);
        self.transitions.axpy(1.0, &other.transitions);
        self.weight.iter_mut().zip(&other.weight).for_each(|(a, b)| *a += b);
        self.sum_x.axpy(1.0, &other.sum_x);
        self.sum_xx.axpy(1.0, &other.sum_xx);
    }

    fn accumulate(&mut self, s: usize, g: f64, x: &[f64]) {
        self.weight[s] += g;
        for (j, v) in x.iter().enumerate() {
            self.sum_x.row_mut(s)[j] += g * v;
            self.sum_xx.row_mut(s)[j] += g * v * v;
        }
    }
}

fn e_step(model: &GaussianHmm, seq: &Sequence) -> Result<Stats> {
    let n = model.n_states();
    let len = seq.len();
    let fw = model.forward(seq, len)?;
    let mut stats = Stats::zeros(n, seq.obs_dim());
    stats.log_likelihood = fw.log_scale.iter().sum();
    let mut beta = vec![1.0; n];
    let mut gamma = vec![0.0; n];
    for t in (0..len).rev() {
        let alpha = fw.alpha.row(t);
        let mut total = 0.0;
        for s in 0..n {
            gamma[s] = alpha[s] * beta[s];
            total += gamma[s];
        }
        for s in 0..n {
            stats.accumulate(s, gamma[s] / total, seq.x(t + 1));
        }
        if t == 0 {
            for s in 0..n {
                stats.first[s] += gamma[s] / total;
            }
            break;
        }
        // Shared factor b_t(j)·β_t(j)/c_t for ξ_{t−1} and the next β.
        let c = fw.scale[t];
        let weighted: Vec<f64> = (0..n).map(|j| fw.emit.row(t)[j] * beta[j] / c).collect();
        let prev = fw.alpha.row(t - 1);
        for i in 0..n {
            let trow = model.transition.row(i);
            let srow = stats.transitions.row_mut(i);
            for j in 0..n {
                srow[j] += prev[i] * trow[j] * weighted[j];
            }
        }
        beta = model.transition.mul_vec(&weighted)?;
    }
    Ok(stats)
}

fn collect_stats(model: &GaussianHmm, data: &[Sequence]) -> Result<Stats> {
    let per_seq: Vec<Result<Stats>> = data.par_iter().map(|s| e_step(model, s)).collect();
    let mut total = Stats::zeros(model.n_states(), model.obs_dim());
    for s in per_seq {
        total.add(&s?);
    }
    Ok(total)
}

fn m_step(model: &GaussianHmm, stats: &Stats, floor: f64, n_seqs: usize) -> GaussianHmm {
    let n = model.n_states();
    let d = model.obs_dim();
    let initial: Vec<f64> = stats.first.iter().map(|f| f / n_seqs as f64).collect();
    let mut transition = model.transition.clone();
    for i in 0..n {
        let row = stats.transitions.row(i);
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            transition.row_mut(i).iter_mut().zip(row).for_each(|(t, r)| *t = r / total);
        }
    }
    let mut means = model.means.clone();
    let mut variances = model.variances.clone();
    for s in 0..n {
        let w = stats.weight[s];
        if !(w > 1e-300) {
            continue;
        }
        for j in 0..d {
            let m = stats.sum_x.row(s)[j] / w;
            let v = stats.sum_xx.row(s)[j] / w - m * m;
            means.row_mut(s)[j] = m;
            variances.row_mut(s)[j] = v.max(floor);
        }
    }
    GaussianHmm {
        initial,
        transition,
        means,
        variances,
    }
}

// Random hard assignment of every sequence position, with one pseudo-count
// in the initial and transition tallies so no probability starts at zero.
fn random_init(data: &[Sequence], n: usize, d: usize, floor: f64, rng: &mut Rng) -> GaussianHmm {
    let mut first = vec![1.0; n];
    let mut trans = Matrix::from_vec(n, n, vec![1.0; n * n]).expect("square");
    let mut stats = Stats::zeros(n, d);
    let mut global = Stats::zeros(1, d);
    for seq in data {
        let mut prev = None;
        for t in 1..=seq.len() {
            let s = rng.below(n);
            stats.accumulate(s, 1.0, seq.x(t));
            global.accumulate(0, 1.0, seq.x(t));
            match prev {
                None => first[s] += 1.0,
                Some(p) => trans.row_mut(p)[s] += 1.0,
            }
            prev = Some(s);
        }
    }
    let total_first: f64 = first.iter().sum();
    let initial = first.iter().map(|f| f / total_first).collect();
    for i in 0..n {
        let total: f64 = trans.row(i).iter().sum();
        trans.row_mut(i).iter_mut().for_each(|v| *v /= total);
    }
    let mut means = Matrix::zeros(n, d);
    let mut variances = Matrix::zeros(n, d);
    for s in 0..n {
        let (src, k) = if stats.weight[s] > 0.0 { (&stats, s) } else { (&global, 0) };
        let w = src.weight[k];
        for j in 0..d {
            let m = src.sum_x.row(k)[j] / w;
            means.row_mut(s)[j] = m;
            variances.row_mut(s)[j] = (src.sum_xx.row(k)[j] / w - m * m).max(floor);
        }
    }
    GaussianHmm {
        initial,
        transition: trans,
        means,
        variances,
    }
}

/// Baum–Welch for a diagonal Gaussian HMM.
pub fn hmm_em_fit(data: &[Sequence], config: &EmConfig, rng: &mut Rng) -> Result<EmFit> {
    let d = common_obs_dim(data)?;
    if config.n_states == 0 || config.restarts == 0 {
        return Err(Error::InvalidArgument("HMM needs n_states >= 1 and restarts >= 1".into()));
    }
    if !(config.variance_floor > 0.0) {
        return Err(Error::InvalidArgument("variance floor must be positive".into()));
    }
    let mut best: Option<EmFit> = None;
    for restart in 0..config.restarts {
        let mut init_rng = rng.substream_indexed("hmm-init", restart as u64);
        let mut model = random_init(data, config.n_states, d, config.variance_floor, &mut init_rng);
        let mut curve = Vec::with_capacity(config.iterations + 1);
        for _ in 0..config.iterations {
            let stats = collect_stats(&model, data)?;
            curve.push(stats.log_likelihood);
            model = m_step(&model, &stats, config.variance_floor, data.len());
        }
        curve.push(collect_stats(&model, data)?.log_likelihood);
        if curve.iter().any(|l| !l.is_finite()) {
            return Err(Error::non_finite("HMM EM"));
        }
        let better = best.as_ref().is_none_or(|b| curve.last() > b.log_likelihoods.last());
        if better {
            best = Some(EmFit {
                model,
                log_likelihoods: curve,
            });
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Expected `x_{t+k}` given `x_1..x_t`.
pub fn hmm_predict(model: &GaussianHmm, seq: &Sequence, t: usize, k: usize) -> Result<Vec<f64>> {
    let posterior = model.filter(seq, t)?;
    model.predict_from_posterior(&posterior, k)
}
