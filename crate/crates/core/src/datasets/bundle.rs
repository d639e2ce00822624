use std::collections::HashSet;

use super::Sequence;
use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Per-dimension means and one global scale: `x_norm = (x − mean) / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationRecord {
    pub means: Vec<f64>,
    pub scale: f64,
}

impl NormalizationRecord {
    pub fn identity(d: usize) -> Self {
        NormalizationRecord {
            means: vec![0.0; d],
            scale: 1.0,
        }
    }

    pub fn apply(&self, seq: &Sequence) -> Sequence {
        seq.map_values(|j, v| (v - self.means[j]) / self.scale)
    }

    pub fn invert(&self, seq: &Sequence) -> Sequence {
        seq.map_values(|j, v| v * self.scale + self.means[j])
    }
}

/// Relative split sizes; counts are assigned by largest remainder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl SplitRatios {
    /// 25 training, 5 validation and 8 test sequences out of 38.
    pub const MOCAP: SplitRatios = SplitRatios {
        train: 25.0,
        validation: 5.0,
        test: 8.0,
    };

    pub fn counts(&self, n: usize) -> Result<[usize; 3]> {
        let weights = [self.train, self.validation, self.test];
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid split ratios {self:?}")));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidArgument("split ratios sum to zero".into()));
        }
        let exact: Vec<f64> = weights.iter().map(|w| w / total * n as f64).collect();
        let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let mut left = n - counts.iter().sum::<usize>();
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            counts[i] += 1;
            left -= 1;
        }
        for (i, (&w, &c)) in weights.iter().zip(&counts).enumerate() {
            if w > 0.0 && c == 0 {
                let name = ["train", "validation", "test"][i];
                return Err(Error::TooFewSequences(format!(
                    "{n} sequences leave the {name} split empty under ratios {self:?}"
                )));
            }
        }
        Ok([counts[0], counts[1], counts[2]])
    }
}

/// Train / validation / test splits plus the normalization that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub train: Vec<Sequence>,
    pub validation: Vec<Sequence>,
    pub test: Vec<Sequence>,
    pub normalization: NormalizationRecord,
}

impl DatasetBundle {
    pub fn obs_dim(&self) -> Option<usize> {
        self.train.first().map(Sequence::obs_dim)
    }

    /// Undoes the stored normalization on every split.
    pub fn denormalize(&self) -> DatasetBundle {
        let inv = |seqs: &[Sequence]| seqs.iter().map(|s| self.normalization.invert(s)).collect();
        DatasetBundle {
            train: inv(&self.train),
            validation: inv(&self.validation),
            test: inv(&self.test),
            normalization: NormalizationRecord::identity(self.normalization.means.len()),
        }
    }
}

/// Seeded shuffle, then partition by `ratios`. The bundle carries an
/// identity normalization.
pub fn split(sequences: Vec<Sequence>, ratios: SplitRatios, seed: u64) -> Result<DatasetBundle> {
    let d = super::common_obs_dim(&sequences)?;
    let mut ids = HashSet::new();
    for s in &sequences {
        if !ids.insert(s.id()) {
            return Err(Error::InvalidArgument(format!("duplicate sequence id `{}`", s.id())));
        }
    }
    let [n_train, n_val, _] = ratios.counts(sequences.len())?;
    let mut order: Vec<usize> = (0..sequences.len()).collect();
    Rng::new(seed).substream("split").shuffle(&mut order);
    let mut slots: Vec<Option<Sequence>> = sequences.into_iter().map(Some).collect();
    let mut take = |range: std::ops::Range<usize>| -> Vec<Sequence> {
        order[range].iter().map(|&i| slots[i].take().expect("index used once")).collect()
    };
    let train = take(0..n_train);
    let validation = take(n_train..n_train + n_val);
    let test = take(n_train + n_val..order.len());
    Ok(DatasetBundle {
        train,
        validation,
        test,
        normalization: NormalizationRecord::identity(d),
    })
}

/// Computes per-dimension means and a single scale on the training split
/// (average per-dimension variance becomes 1) and applies them to all
/// splits. Any previous normalization is composed into the new record.
pub fn normalize(bundle: &DatasetBundle) -> Result<DatasetBundle> {
    let d = super::common_obs_dim(&bundle.train)?;
    let rows: usize = bundle.train.iter().map(Sequence::len).sum();
    let mut means = vec![0.0; d];
    for s in &bundle.train {
        for t in 1..=s.len() {
            for (m, v) in means.iter_mut().zip(s.x(t)) {
                *m += v;
            }
        }
    }
    means.iter_mut().for_each(|m| *m /= rows as f64);
    let mut var = vec![0.0; d];
    for s in &bundle.train {
        for t in 1..=s.len() {
            for ((acc, v), m) in var.iter_mut().zip(s.x(t)).zip(&means) {
                *acc += (v - m) * (v - m);
            }
        }
    }
    let avg_var = var.iter().sum::<f64>() / (rows * d) as f64;
    if !(avg_var > 0.0) {
        return Err(Error::DegenerateData(
            "training split has zero variance in every dimension".into(),
        ));
    }
    let record = NormalizationRecord {
        means,
        scale: avg_var.sqrt(),
    };
    let apply = |seqs: &[Sequence]| -> Result<Vec<Sequence>> {
        seqs.iter()
            .map(|s| {
                if s.obs_dim() != d {
                    return Err(Error::dims("split observation dimension", d, s.obs_dim()));
                }
                Ok(record.apply(s))
            })
            .collect()
    };
    let prev = &bundle.normalization;
    let composed = NormalizationRecord {
        means: prev
            .means
            .iter()
            .zip(&record.means)
            .map(|(pm, m)| pm + prev.scale * m)
            .collect(),
        scale: prev.scale * record.scale,
    };
    Ok(DatasetBundle {
        train: apply(&bundle.train)?,
        validation: apply(&bundle.validation)?,
        test: apply(&bundle.test)?,
        normalization: composed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Matrix;

    fn random_seqs(n: usize, len: usize, d: usize, seed: u64, scale: f64, shift: f64) -> Vec<Sequence> {
        let mut rng = Rng::new(seed);
        (0..n)
            .map(|i| {
                let v = rng.normals(len * d, shift, scale);
                Sequence::new(format!("s{i}"), Matrix::from_vec(len, d, v).unwrap()).unwrap()
            })
            .collect()
    }

    fn stats(seqs: &[Sequence]) -> (Vec<f64>, f64) {
        let d = seqs[0].obs_dim();
        let n: usize = seqs.iter().map(Sequence::len).sum();
        let mut mean = vec![0.0; d];
        for s in seqs {
            for t in 1..=s.len() {
                for j in 0..d {
                    mean[j] += s.x(t)[j] / n as f64;
                }
            }
        }
        let mut var = 0.0;
        for s in seqs {
            for t in 1..=s.len() {
                for j in 0..d {
                    var += (s.x(t)[j] - mean[j]).powi(2);
                }
            }
        }
        (mean, var / (n * d) as f64)
    }

    #[test]
    fn mocap_split_counts() {
        let seqs = random_seqs(38, 3, 2, 1, 1.0, 0.0);
        let b = split(seqs.clone(), SplitRatios::MOCAP, 4).unwrap();
        assert_eq!((b.train.len(), b.validation.len(), b.test.len()), (25, 5, 8));
        let again = split(seqs.clone(), SplitRatios::MOCAP, 4).unwrap();
        assert_eq!(b, again);
        let mut ids: Vec<&str> = b.train.iter().chain(&b.validation).chain(&b.test).map(|s| s.id()).collect();
        ids.sort();
        let mut orig: Vec<&str> = seqs.iter().map(|s| s.id()).collect();
        orig.sort();
        assert_eq!(ids, orig);
    }

    #[test]
    fn too_few_sequences() {
        let seqs = random_seqs(2, 3, 1, 1, 1.0, 0.0);
        assert!(matches!(
            split(seqs, SplitRatios::MOCAP, 0),
            Err(Error::TooFewSequences(_))
        ));
    }

    #[test]
    fn normalized_statistics() {
        let seqs = random_seqs(20, 10, 3, 2, 3.0, 5.0);
        let b = normalize(&split(seqs, SplitRatios::MOCAP, 1).unwrap()).unwrap();
        let (mean, var) = stats(&b.train);
        assert!(mean.iter().all(|m| m.abs() < 1e-10));
        assert!((var - 1.0).abs() < 1e-8);
        let back = b.denormalize();
        let round = normalize(&split(back.train.clone(), SplitRatios { train: 1.0, validation: 0.0, test: 0.0 }, 0).unwrap()).unwrap();
        assert!((round.normalization.scale - b.normalization.scale).abs() < 1e-9);
    }

    #[test]
    fn normalize_round_trip() {
        let seqs = random_seqs(10, 6, 2, 3, 2.0, -1.0);
        let raw = split(seqs, SplitRatios { train: 6.0, validation: 2.0, test: 2.0 }, 9).unwrap();
        let b = normalize(&raw).unwrap();
        let back = b.denormalize();
        for (a, r) in back.test.iter().zip(&raw.test) {
            assert!(a.observations().max_abs_diff(r.observations()) < 1e-12);
        }
        let renorm = NormalizationRecord::apply(&b.normalization, &back.test[0]);
        assert!(renorm.observations().max_abs_diff(b.test[0].observations()) < 1e-12);
    }

    #[test]
    fn already_normalized_is_a_fixed_point() {
        let seqs = random_seqs(12, 8, 2, 5, 1.0, 0.0);
        let once = normalize(&split(seqs, SplitRatios { train: 1.0, validation: 0.0, test: 0.0 }, 0).unwrap()).unwrap();
        let mut plain = once.clone();
        plain.normalization = NormalizationRecord::identity(2);
        let twice = normalize(&plain).unwrap();
        assert!((twice.normalization.scale - 1.0).abs() < 1e-12);
        assert!(twice.normalization.means.iter().all(|m| m.abs() < 1e-12));
    }

    #[test]
    fn constant_data_is_degenerate() {
        let seqs: Vec<Sequence> = (0..4)
            .map(|i| Sequence::from_scalars(format!("c{i}"), &[2.0; 5]).unwrap())
            .collect();
        let b = split(seqs, SplitRatios { train: 1.0, validation: 0.0, test: 0.0 }, 0).unwrap();
        assert!(matches!(normalize(&b), Err(Error::DegenerateData(_))));
    }
}
