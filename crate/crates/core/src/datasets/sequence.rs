use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// One observed time series: `T` rows of `d` real observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    id: String,
    obs: Matrix,
}

impl Sequence {
    pub fn new(id: impl Into<String>, obs: Matrix) -> Result<Self> {
        let id = id.into();
        if obs.rows() == 0 || obs.cols() == 0 {
            return Err(Error::EmptySequence(id));
        }
        if !obs.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "sequence `{id}` contains non-finite observations"
            )));
        }
        Ok(Sequence { id, obs })
    }

    pub fn from_rows(id: impl Into<String>, rows: &[Vec<f64>]) -> Result<Self> {
        Sequence::new(id, Matrix::from_rows(rows)?)
    }

    /// A one-dimensional sequence from scalar observations.
    pub fn from_scalars(id: impl Into<String>, values: &[f64]) -> Result<Self> {
        Sequence::new(id, Matrix::from_vec(values.len(), 1, values.to_vec())?)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn len(&self) -> usize {
        self.obs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.rows() == 0
    }

    pub fn obs_dim(&self) -> usize {
        self.obs.cols()
    }

    pub fn observations(&self) -> &Matrix {
        &self.obs
    }

    /// Observation `x_t` with 1-based time index `t`.
    #[inline]
    pub fn x(&self, t: usize) -> &[f64] {
        self.obs.row(t - 1)
    }

    /// The first `t` observations as a new sequence with the same id.
    pub fn prefix(&self, t: usize) -> Result<Sequence> {
        if t == 0 || t > self.len() {
            return Err(Error::InvalidArgument(format!(
                "prefix length {t} outside 1..={} for `{}`",
                self.len(),
                self.id
            )));
        }
        let d = self.obs_dim();
        let data = self.obs.as_slice()[..t * d].to_vec();
        Ok(Sequence {
            id: self.id.clone(),
            obs: Matrix::from_vec(t, d, data)?,
        })
    }

    pub(crate) fn map_values(&self, mut f: impl FnMut(usize, f64) -> f64) -> Sequence {
        let d = self.obs_dim();
        let mut obs = self.obs.clone();
        for (i, v) in obs.as_mut_slice().iter_mut().enumerate() {
            *v = f(i % d, *v);
        }
        Sequence {
            id: self.id.clone(),
            obs,
        }
    }
}

/// Common observation dimension of a nonempty set of sequences.
pub fn common_obs_dim(seqs: &[Sequence]) -> Result<usize> {
    let first = seqs
        .first()
        .ok_or_else(|| Error::TooFewSequences("no sequences supplied".into()))?;
    let d = first.obs_dim();
    for s in seqs {
        if s.obs_dim() != d {
            return Err(Error::dims("sequence observation dimension", d, s.obs_dim()));
        }
    }
    Ok(d)
}
