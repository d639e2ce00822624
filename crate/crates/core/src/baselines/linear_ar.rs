use std::collections::BTreeMap;

use crate::codec::{Decoder, Encoder};
use crate::datasets::{common_obs_dim, Sequence};
use crate::error::{Error, Result};
use crate::numerics::{ridge_with_intercept, squared_distance, Matrix};

pub const LINEAR_MAGIC: &[u8; 4] = b"LINA";

/// Ridge penalties tried when selecting on a validation split.
pub const DEFAULT_LAMBDA_GRID: [f64; 4] = [1e-6, 1e-4, 1e-2, 1.0];

/// Direct regression weights for one horizon:
/// `x̂_{t+k} = Σᵢ Lᵢᵀ x_{t−i+1} + ℓ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearWeights {
    /// `order` matrices of shape `d×d`, newest lag first.
    pub lags: Vec<Matrix>,
    pub bias: Vec<f64>,
    pub lambda: f64,
}

/// LINEAR-k autoregressor with one weight set per fitted horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearArModel {
    order: usize,
    obs_dim: usize,
    horizons: BTreeMap<usize, LinearWeights>,
}

struct Pairs {
    features: Matrix,
    targets: Matrix,
}

fn collect_pairs(data: &[Sequence], k: usize, horizon: usize, d: usize) -> Option<Pairs> {
    let mut feats = Vec::new();
    let mut targs = Vec::new();
    let mut n = 0;
    for seq in data {
        if seq.len() < k + horizon {
            continue;
        }
        for t in k..=seq.len() - horizon {
            for lag in 0..k {
                feats.extend_from_slice(seq.x(t - lag));
            }
            targs.extend_from_slice(seq.x(t + horizon));
            n += 1;
        }
    }
    (n > 0).then(|| Pairs {
        features: Matrix::from_vec(n, k * d, feats).expect("pair layout"),
        targets: Matrix::from_vec(n, d, targs).expect("pair layout"),
    })
}

fn fit_pairs(pairs: &Pairs, k: usize, d: usize, lambda: f64) -> Result<LinearWeights> {
    let (w, bias) = ridge_with_intercept(&pairs.features, &pairs.targets, lambda)?;
    let lags = (0..k)
        .map(|i| {
            let block = w.as_slice()[i * d * d..(i + 1) * d * d].to_vec();
            Matrix::from_vec(d, d, block).expect("lag block")
        })
        .collect();
    Ok(LinearWeights { lags, bias, lambda })
}

impl LinearWeights {
    fn predict(&self, window: &[&[f64]]) -> Result<Vec<f64>> {
        let mut out = self.bias.clone();
        for (lag, x) in self.lags.iter().zip(window) {
            lag.tmul_vec_add(x, &mut out)?;
        }
        Ok(out)
    }
}

/// Fits one ridge regression per horizon on every `(k-window → x_{t+h})`
/// pair across all sequences.
pub fn fit_linear_ar(
    data: &[Sequence],
    k: usize,
    horizons: &[usize],
    lambda: f64,
) -> Result<LinearArModel> {
    let d = common_obs_dim(data)?;
    check_args(k, horizons)?;
    let mut fitted = BTreeMap::new();
    for &h in horizons {
        let pairs = collect_pairs(data, k, h, d).ok_or_else(|| {
            Error::InsufficientPairs(format!("no LINEAR-{k} training pairs at horizon {h}"))
        })?;
        fitted.insert(h, fit_pairs(&pairs, k, d, lambda)?);
    }
    Ok(LinearArModel {
        order: k,
        obs_dim: d,
        horizons: fitted,
    })
}

/// Like [`fit_linear_ar`], choosing each horizon's penalty from `grid` by
/// validation mean squared error (first grid value on ties, or when the
/// validation split has no pairs at that horizon).
pub fn fit_linear_ar_selected(
    train: &[Sequence],
    validation: &[Sequence],
    k: usize,
    horizons: &[usize],
    grid: &[f64],
) -> Result<LinearArModel> {
    let d = common_obs_dim(train)?;
    check_args(k, horizons)?;
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty ridge penalty grid".into()));
    }
    let mut fitted = BTreeMap::new();
    for &h in horizons {
        let pairs = collect_pairs(train, k, h, d).ok_or_else(|| {
            Error::InsufficientPairs(format!("no LINEAR-{k} training pairs at horizon {h}"))
        })?;
        let val = collect_pairs(validation, k, h, d);
        let mut best: Option<(f64, LinearWeights)> = None;
        for &lambda in grid {
            let w = fit_pairs(&pairs, k, d, lambda)?;
            let Some(val) = &val else {
                best = Some((0.0, w));
                break;
            };
            let mse = pairs_mse(&w, val, k, d)?;
            if best.as_ref().is_none_or(|(b, _)| mse < *b) {
                best = Some((mse, w));
            }
        }
        fitted.insert(h, best.expect("grid is nonempty").1);
    }
    Ok(LinearArModel {
        order: k,
        obs_dim: d,
        horizons: fitted,
    })
}

fn pairs_mse(w: &LinearWeights, pairs: &Pairs, k: usize, d: usize) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..pairs.features.rows() {
        let row = pairs.features.row(i);
        let window: Vec<&[f64]> = (0..k).map(|l| &row[l * d..(l + 1) * d]).collect();
        total += squared_distance(&w.predict(&window)?, pairs.targets.row(i));
    }
    Ok(total / (pairs.features.rows() * d) as f64)
}

fn check_args(k: usize, horizons: &[usize]) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("LINEAR-k needs k >= 1".into()));
    }
    if horizons.is_empty() || horizons.contains(&0) {
        return Err(Error::InvalidArgument("horizons must be nonempty and >= 1".into()));
    }
    Ok(())
}

impl LinearArModel {
    pub fn from_weights(order: usize, obs_dim: usize, horizons: BTreeMap<usize, LinearWeights>) -> Result<Self> {
        for w in horizons.values() {
            if w.lags.len() != order {
                return Err(Error::dims("LINEAR-k lag count", order, w.lags.len()));
            }
            if w.bias.len() != obs_dim || w.lags.iter().any(|l| l.shape() != (obs_dim, obs_dim)) {
                return Err(Error::dims("LINEAR-k weight shape", obs_dim, w.bias.len()));
            }
        }
        Ok(LinearArModel {
            order,
            obs_dim,
            horizons,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn horizons(&self) -> impl Iterator<Item = usize> + '_ {
        self.horizons.keys().copied()
    }

    pub fn weights(&self, horizon: usize) -> Option<&LinearWeights> {
        self.horizons.get(&horizon)
    }

    /// `window[0]` is `x_t`, `window[1]` is `x_{t−1}`, and so on.
    pub fn predict(&self, window: &[&[f64]], horizon: usize) -> Result<Vec<f64>> {
        let w = self.horizons.get(&horizon).ok_or(Error::UnknownHorizon(horizon))?;
        if window.len() != self.order {
            return Err(Error::dims("LINEAR-k window", self.order, window.len()));
        }
        if let Some(x) = window.iter().find(|x| x.len() != self.obs_dim) {
            return Err(Error::dims("LINEAR-k window entry", self.obs_dim, x.len()));
        }
        w.predict(window)
    }

    /// Prediction of `x_{t+horizon}` from a sequence prefix; lags before the
    /// start of the sequence read as zero (the normalized mean).
    pub fn predict_at(&self, seq: &Sequence, t: usize, horizon: usize) -> Result<Vec<f64>> {
        if t == 0 || t > seq.len() {
            return Err(Error::HorizonOutOfRange(format!(
                "prefix {t} outside 1..={}",
                seq.len()
            )));
        }
        let zeros = vec![0.0; self.obs_dim];
        let window: Vec<&[f64]> = (0..self.order)
            .map(|lag| if lag < t { seq.x(t - lag) } else { zeros.as_slice() })
            .collect();
        self.predict(&window, horizon)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new(LINEAR_MAGIC);
        enc.u64(self.order as u64)
            .u64(self.obs_dim as u64)
            .u64(self.horizons.len() as u64);
        for (&h, w) in &self.horizons {
            enc.u64(h as u64).f64s(&[w.lambda]);
            for lag in &w.lags {
                enc.matrix(lag);
            }
            enc.f64s(&w.bias);
        }
        enc.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut dec = Decoder::new(bytes, LINEAR_MAGIC)?;
        let order = dec.dim("order")?;
        let d = dec.dim("obs_dim")?;
        let n = dec.dim("horizon count")?;
        let mut horizons = BTreeMap::new();
        for _ in 0..n {
            let h = dec.dim("horizon")?;
            let lambda = dec.f64s(1, "lambda")?[0];
            let lags = (0..order)
                .map(|i| dec.matrix(d, d, &format!("L{}", i + 1)))
                .collect::<Result<Vec<_>>>()?;
            let bias = dec.f64s(d, "bias")?;
            if horizons.insert(h, LinearWeights { lags, bias, lambda }).is_some() {
                return Err(dec.corrupt(format!("duplicate horizon {h}")));
            }
        }
        dec.finish()?;
        Ok(LinearArModel {
            order,
            obs_dim: d,
            horizons,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    #[test]
    fn recovers_identity_dynamics() {
        let mut rng = Rng::new(3);
        let seqs: Vec<Sequence> = (0..6)
            .map(|i| {
                let x = rng.normals(2, 0.0, 1.0);
                Sequence::from_rows(format!("c{i}"), &vec![x; 5]).unwrap()
            })
            .collect();
        let m = fit_linear_ar(&seqs, 1, &[1], 0.0).unwrap();
        let w = m.weights(1).unwrap();
        assert!(w.lags[0].max_abs_diff(&Matrix::identity(2)) < 1e-8);
        assert!(w.bias.iter().all(|b| b.abs() < 1e-8));
    }

    #[test]
    fn recovers_planted_second_order_dynamics() {
        let mut rng = Rng::new(8);
        let seqs: Vec<Sequence> = (0..5)
            .map(|i| {
                let mut v = vec![rng.normal(0.0, 1.0), rng.normal(0.0, 1.0)];
                for t in 2..30 {
                    let next = 1.2 * v[t - 1] - 0.5 * v[t - 2] + 0.3 + 0.1 * rng.normal(0.0, 1.0);
                    v.push(next);
                }
                Sequence::from_scalars(format!("ar{i}"), &v).unwrap()
            })
            .collect();
        // Noise makes the data only approximately AR(2); direct fit recovers
        // the one-step coefficients closely.
        let m = fit_linear_ar(&seqs, 2, &[1], 0.0).unwrap();
        let w = m.weights(1).unwrap();
        assert!((w.lags[0][(0, 0)] - 1.2).abs() < 0.1);
        assert!((w.lags[1][(0, 0)] + 0.5).abs() < 0.1);
    }

    #[test]
    fn zero_data_fits_zero_model() {
        let seqs: Vec<Sequence> = (0..3)
            .map(|i| Sequence::from_rows(format!("z{i}"), &vec![vec![0.0; 2]; 8]).unwrap())
            .collect();
        let m = fit_linear_ar(&seqs, 5, &[1, 2], 1e-3).unwrap();
        assert_eq!(m.order(), 5);
        for h in [1, 2] {
            let w = m.weights(h).unwrap();
            assert_eq!(w.lags.len(), 5);
            assert!(w.lags.iter().all(|l| l.frobenius_norm() == 0.0));
            assert!(w.bias.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn hand_computed_prediction() {
        let mut horizons = BTreeMap::new();
        horizons.insert(
            1,
            LinearWeights {
                lags: vec![
                    Matrix::from_vec(1, 1, vec![2.0]).unwrap(),
                    Matrix::from_vec(1, 1, vec![-1.0]).unwrap(),
                ],
                bias: vec![0.0],
                lambda: 0.0,
            },
        );
        let m = LinearArModel::from_weights(2, 1, horizons).unwrap();
        assert_eq!(m.predict(&[&[3.0], &[1.0]], 1).unwrap(), vec![5.0]);
        assert!(matches!(m.predict(&[&[3.0], &[1.0]], 4), Err(Error::UnknownHorizon(4))));
    }

    #[test]
    fn bias_only_and_zero_models() {
        let mut horizons = BTreeMap::new();
        horizons.insert(
            3,
            LinearWeights {
                lags: vec![Matrix::zeros(2, 2)],
                bias: vec![0.5, -0.5],
                lambda: 1.0,
            },
        );
        let m = LinearArModel::from_weights(1, 2, horizons).unwrap();
        assert_eq!(m.predict(&[&[7.0, 8.0]], 3).unwrap(), vec![0.5, -0.5]);
    }

    #[test]
    fn too_short_data_has_no_pairs() {
        let seqs = vec![Sequence::from_scalars("s", &[1.0, 2.0]).unwrap()];
        assert!(matches!(
            fit_linear_ar(&seqs, 2, &[1], 0.0),
            Err(Error::InsufficientPairs(_))
        ));
    }

    #[test]
    fn validation_selects_from_grid_and_round_trips() {
        let mut rng = Rng::new(12);
        let make = |rng: &mut Rng, n: usize, tag: &str| -> Vec<Sequence> {
            (0..n)
                .map(|i| {
                    let v: Vec<f64> = rng.normals(20, 0.0, 1.0);
                    Sequence::from_scalars(format!("{tag}{i}"), &v).unwrap()
                })
                .collect()
        };
        let train = make(&mut rng, 4, "t");
        let val = make(&mut rng, 2, "v");
        let m = fit_linear_ar_selected(&train, &val, 2, &[1, 4], &DEFAULT_LAMBDA_GRID).unwrap();
        for h in [1, 4] {
            assert!(DEFAULT_LAMBDA_GRID.contains(&m.weights(h).unwrap().lambda));
        }
        let back = LinearArModel::from_bytes(&m.to_bytes()).unwrap();
        assert_eq!(back, m);
        let bytes = m.to_bytes();
        assert!(LinearArModel::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }
}
