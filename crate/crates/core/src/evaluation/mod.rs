//! Multi-horizon squared-error evaluation and model comparison tables.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::baselines::{hmm_predict, AveragePredictor, GaussianHmm, LinearArModel};
use crate::datasets::{format_value, Sequence};
use crate::error::{Error, Result};
use crate::numerics::squared_distance;
use crate::spr::{predict_horizon, SprParams};

/// Smallest prefix length scored by default; LINEAR-5's window always fits.
pub const DEFAULT_MIN_PREFIX: usize = 5;

/// Horizons used for the motion-style comparisons.
pub const STANDARD_HORIZONS: [usize; 7] = [1, 2, 4, 8, 10, 16, 25];

/// Anything that predicts `x_{t+k}` from the prefix `x_1..x_t`.
pub trait Forecaster: Sync {
    fn predict(&self, prefix: &Sequence, k: usize) -> Result<Vec<f64>>;
}

impl Forecaster for SprParams {
    fn predict(&self, prefix: &Sequence, k: usize) -> Result<Vec<f64>> {
        predict_horizon(self, prefix, prefix.len(), k)
    }
}

impl Forecaster for LinearArModel {
    fn predict(&self, prefix: &Sequence, k: usize) -> Result<Vec<f64>> {
        self.predict_at(prefix, prefix.len(), k)
    }
}

impl Forecaster for GaussianHmm {
    fn predict(&self, prefix: &Sequence, k: usize) -> Result<Vec<f64>> {
        hmm_predict(self, prefix, prefix.len(), k)
    }
}

impl Forecaster for AveragePredictor {
    fn predict(&self, _prefix: &Sequence, _k: usize) -> Result<Vec<f64>> {
        Ok(AveragePredictor::predict(self))
    }
}

/// Per-horizon mean squared error of one model. Horizons with no scorable
/// position are listed in `missing` rather than reported as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonReport {
    pub model: String,
    pub horizons: Vec<usize>,
    pub mse: Vec<f64>,
    pub n_predictions: Vec<usize>,
    pub missing: Vec<usize>,
}

impl HorizonReport {
    pub fn mse_at(&self, horizon: usize) -> Option<f64> {
        self.horizons.iter().position(|&h| h == horizon).map(|i| self.mse[i])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("# squared error averaged over dimensions, positions and sequences\n");
        writeln!(out, "# model: {}", self.model).unwrap();
        out.push_str("horizon,mse,n_predictions\n");
        for ((h, m), n) in self.horizons.iter().zip(&self.mse).zip(&self.n_predictions) {
            writeln!(out, "{h},{},{n}", format_value(*m)).unwrap();
        }
        out
    }
}

/// `(t, ‖x̂_{t+k} − x_{t+k}‖²/d)` for every `t` in `min_prefix..=T−k`.
pub fn position_errors(
    model: &dyn Forecaster,
    seq: &Sequence,
    horizon: usize,
    min_prefix: usize,
) -> Result<Vec<(usize, f64)>> {
    let d = seq.obs_dim() as f64;
    let last = seq.len().saturating_sub(horizon);
    (min_prefix..=last)
        .map(|t| {
            let pred = model.predict(&seq.prefix(t)?, horizon)?;
            if pred.len() != seq.obs_dim() {
                return Err(Error::dims("prediction", seq.obs_dim(), pred.len()));
            }
            Ok((t, squared_distance(&pred, seq.x(t + horizon)) / d))
        })
        .collect()
}

/// Scores `model` at each horizon over every valid position of every test
/// sequence.
pub fn evaluate(
    name: &str,
    model: &dyn Forecaster,
    test: &[Sequence],
    horizons: &[usize],
    min_prefix: usize,
) -> Result<HorizonReport> {
    if horizons.is_empty() || horizons.contains(&0) {
        return Err(Error::InvalidArgument("horizons must be nonempty and >= 1".into()));
    }
    if min_prefix == 0 {
        return Err(Error::InvalidArgument("min_prefix must be at least 1".into()));
    }
    // Per sequence: id and (error sum, count) at each horizon.
    type SeqSums = (String, Vec<(f64, usize)>);
    let per_seq: Vec<Result<SeqSums>> = test
        .par_iter()
        .map(|seq| {
            let sums = horizons
                .iter()
                .map(|&h| {
                    let errs = position_errors(model, seq, h, min_prefix)?;
                    Ok((errs.iter().map(|e| e.1).sum::<f64>(), errs.len()))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((seq.id().to_string(), sums))
        })
        .collect();
    let mut per_seq = per_seq.into_iter().collect::<Result<Vec<_>>>()?;
    // Canonical order keeps the totals independent of test-set ordering.
    per_seq.sort_by(|a, b| {
        a.0.cmp(&b.0).then_with(|| {
            let bits = |v: &Vec<(f64, usize)>| v.iter().map(|x| x.0.to_bits()).collect::<Vec<_>>();
            bits(&a.1).cmp(&bits(&b.1))
        })
    });
    let mut report = HorizonReport {
        model: name.to_string(),
        horizons: Vec::new(),
        mse: Vec::new(),
        n_predictions: Vec::new(),
        missing: Vec::new(),
    };
    for (i, &h) in horizons.iter().enumerate() {
        let (sum, n) = per_seq
            .iter()
            .fold((0.0, 0), |(s, n), (_, v)| (s + v[i].0, n + v[i].1));
        if n == 0 {
            report.missing.push(h);
            continue;
        }
        let mse = sum / n as f64;
        if !mse.is_finite() {
            return Err(Error::non_finite(format!("evaluation of {name} at horizon {h}")));
        }
        report.horizons.push(h);
        report.mse.push(mse);
        report.n_predictions.push(n);
    }
    if report.horizons.is_empty() {
        return Err(Error::NoValidPositions(format!(
            "no test sequence is long enough for min_prefix {min_prefix} at horizons {horizons:?}"
        )));
    }
    Ok(report)
}

/// Models side by side on the horizons every report shares.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub models: Vec<String>,
    pub horizons: Vec<usize>,
    /// `rows[i][m]` is model `m`'s error at `horizons[i]`.
    pub rows: Vec<Vec<f64>>,
    /// Horizons present in some report but not all.
    pub dropped: Vec<usize>,
}

impl ComparisonTable {
    pub fn is_empty(&self) -> bool {
        self.horizons.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("horizon");
        for m in &self.models {
            out.push(',');
            out.push_str(m);
        }
        out.push('\n');
        for (h, row) in self.horizons.iter().zip(&self.rows) {
            out.push_str(&h.to_string());
            for v in row {
                out.push(',');
                out.push_str(&format_value(*v));
            }
            out.push('\n');
        }
        out
    }
}

pub fn compare(reports: &[HorizonReport]) -> ComparisonTable {
    let mut all: Vec<usize> = reports.iter().flat_map(|r| r.horizons.iter().copied()).collect();
    all.sort_unstable();
    all.dedup();
    let (horizons, dropped): (Vec<usize>, Vec<usize>) = all
        .into_iter()
        .partition(|h| reports.iter().all(|r| r.horizons.contains(h)));
    let rows = horizons
        .iter()
        .map(|&h| reports.iter().map(|r| r.mse_at(h).expect("shared horizon")).collect())
        .collect();
    ComparisonTable {
        models: reports.iter().map(|r| r.model.clone()).collect(),
        horizons,
        rows,
        dropped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Matrix, Rng};

    /// Cheats by remembering the full sequences.
    struct Oracle(Vec<Sequence>);

    impl Forecaster for Oracle {
        fn predict(&self, prefix: &Sequence, k: usize) -> Result<Vec<f64>> {
            let full = self.0.iter().find(|s| s.id() == prefix.id()).unwrap();
            Ok(full.x(prefix.len() + k).to_vec())
        }
    }

    fn data(n: usize, len: usize, d: usize, seed: u64) -> Vec<Sequence> {
        let mut rng = Rng::new(seed);
        (0..n)
            .map(|i| Sequence::new(format!("q{i}"), Matrix::from_vec(len, d, rng.normals(len * d, 0.0, 1.0)).unwrap()).unwrap())
            .collect()
    }

    #[test]
    fn oracle_scores_zero() {
        let test = data(3, 20, 2, 1);
        let r = evaluate("oracle", &Oracle(test.clone()), &test, &[1, 3], 5).unwrap();
        assert_eq!(r.mse, vec![0.0, 0.0]);
        assert_eq!(r.n_predictions, vec![3 * 15, 3 * 13]);
    }

    #[test]
    fn average_predictor_is_second_moment() {
        let test = data(4, 30, 3, 2);
        let avg = AveragePredictor { obs_dim: 3 };
        let r = evaluate("average", &avg, &test, &STANDARD_HORIZONS, 5).unwrap();
        for (i, &h) in r.horizons.iter().enumerate() {
            let mut total = 0.0;
            let mut n = 0;
            for s in &test {
                for t in 5..=s.len() - h {
                    total += s.x(t + h).iter().map(|v| v * v).sum::<f64>() / 3.0;
                    n += 1;
                }
            }
            assert!((r.mse[i] - total / n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn standard_horizons_fit_fifty_steps() {
        let test = data(2, 50, 1, 3);
        let r = evaluate("average", &AveragePredictor { obs_dim: 1 }, &test, &STANDARD_HORIZONS, DEFAULT_MIN_PREFIX).unwrap();
        assert_eq!(r.horizons, STANDARD_HORIZONS.to_vec());
        assert!(r.n_predictions.iter().all(|&n| n > 0));
    }

    #[test]
    fn short_sequences_mark_horizons_missing() {
        let test = data(2, 10, 1, 4);
        let avg = AveragePredictor { obs_dim: 1 };
        let r = evaluate("average", &avg, &test, &[1, 8], 5).unwrap();
        assert_eq!((r.horizons.clone(), r.missing.clone()), (vec![1], vec![8]));
        assert!(matches!(evaluate("average", &avg, &test, &[8], 5), Err(Error::NoValidPositions(_))));
    }

    #[test]
    fn order_invariant() {
        let test = data(6, 15, 2, 5);
        let mut model = crate::spr::SprParams::init(crate::spr::ModelDims::new(2, 3, 15, 2).unwrap(), &mut Rng::new(1), 0.5);
        model.decode.bias = vec![0.3, -0.1];
        let a = evaluate("spr", &model, &test, &[1, 2, 4], 5).unwrap();
        let mut rev = test.clone();
        rev.reverse();
        let b = evaluate("spr", &model, &rev, &[1, 2, 4], 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn compare_intersects_horizons() {
        let r = |name: &str, hs: &[usize]| HorizonReport {
            model: name.into(),
            horizons: hs.to_vec(),
            mse: hs.iter().map(|&h| h as f64).collect(),
            n_predictions: vec![1; hs.len()],
            missing: vec![],
        };
        let one = compare(&[r("a", &[1, 2])]);
        assert_eq!(one.horizons, vec![1, 2]);
        assert_eq!(one.rows, vec![vec![1.0], vec![2.0]]);
        let two = compare(&[r("a", &[1, 2, 4]), r("b", &[2, 4, 8])]);
        assert_eq!((two.horizons.clone(), two.dropped.clone()), (vec![2, 4], vec![1, 8]));
        assert_eq!(two.to_csv().lines().next(), Some("horizon,a,b"));
        assert!(compare(&[r("a", &[1]), r("b", &[2])]).is_empty());
    }
}
