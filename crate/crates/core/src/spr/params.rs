use crate::codec::{Decoder, Encoder};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

pub const MODEL_MAGIC: &[u8; 4] = b"SPRM";

/// Standard deviation of the initial weight draws.
pub const DEFAULT_INIT_STDDEV: f64 = 0.01;

/// Shape of a model: observation dimension `d`, state dimension `h`,
/// training sequence length `T` and observation window `w`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub obs_dim: usize,
    pub state_dim: usize,
    pub seq_len: usize,
    pub window: usize,
}

impl ModelDims {
    pub fn new(obs_dim: usize, state_dim: usize, seq_len: usize, window: usize) -> Result<Self> {
        let dims = ModelDims {
            obs_dim,
            state_dim,
            seq_len,
            window,
        };
        if obs_dim == 0 || state_dim == 0 || seq_len == 0 || window == 0 {
            return Err(Error::InvalidArgument(format!(
                "model dimensions must all be at least 1: {dims:?}"
            )));
        }
        Ok(dims)
    }

    /// Length of the augmented input: `d·w` observations plus the timestep.
    pub fn input_dim(&self) -> usize {
        self.obs_dim * self.window + 1
    }

    /// Number of projection operators, `⌊log₂T⌋ + 1`.
    pub fn projection_count(&self) -> usize {
        self.seq_len.ilog2() as usize + 1
    }
}

/// `x ↦ Wᵀx + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Affine {
    pub fn zeros(input: usize, output: usize) -> Self {
        Affine {
            weights: Matrix::zeros(input, output),
            bias: vec![0.0; output],
        }
    }

    pub fn identity(n: usize) -> Self {
        Affine {
            weights: Matrix::identity(n),
            bias: vec![0.0; n],
        }
    }

    /// Normal(0, stddev²) weights, zero bias.
    pub fn random(input: usize, output: usize, stddev: f64, rng: &mut Rng) -> Self {
        let w = rng.normals(input * output, 0.0, stddev);
        Affine {
            weights: Matrix::from_vec(input, output, w).expect("shape"),
            bias: vec![0.0; output],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.bias.clone();
        self.weights.tmul_vec_add(x, &mut out)?;
        Ok(out)
    }

    pub fn axpy(&mut self, alpha: f64, other: &Affine) {
        self.weights.axpy(alpha, &other.weights);
        crate::numerics::axpy(alpha, &other.bias, &mut self.bias);
    }

    pub fn scale(&mut self, alpha: f64) {
        self.weights.scale(alpha);
        self.bias.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn squared_norm(&self) -> f64 {
        self.weights.as_slice().iter().chain(&self.bias).map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.is_finite() && self.bias.iter().all(|v| v.is_finite())
    }
}

/// State update `(x, s) ↦ B₁ᵀx + B₂ᵀs + b` (before the logistic).
#[derive(Debug, Clone, PartialEq)]
pub struct Recurrent {
    pub input: Matrix,
    pub state: Matrix,
    pub bias: Vec<f64>,
}

impl Recurrent {
    pub fn zeros(input_dim: usize, state_dim: usize) -> Self {
        Recurrent {
            input: Matrix::zeros(input_dim, state_dim),
            state: Matrix::zeros(state_dim, state_dim),
            bias: vec![0.0; state_dim],
        }
    }

    pub fn random(input_dim: usize, state_dim: usize, stddev: f64, rng: &mut Rng) -> Self {
        let input = rng.normals(input_dim * state_dim, 0.0, stddev);
        let state = rng.normals(state_dim * state_dim, 0.0, stddev);
        Recurrent {
            input: Matrix::from_vec(input_dim, state_dim, input).expect("shape"),
            state: Matrix::from_vec(state_dim, state_dim, state).expect("shape"),
            bias: vec![0.0; state_dim],
        }
    }

    pub fn preactivation(&self, x: &[f64], s: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.bias.clone();
        self.input.tmul_vec_add(x, &mut z)?;
        self.state.tmul_vec_add(s, &mut z)?;
        Ok(z)
    }

    pub fn axpy(&mut self, alpha: f64, other: &Recurrent) {
        self.input.axpy(alpha, &other.input);
        self.state.axpy(alpha, &other.state);
        crate::numerics::axpy(alpha, &other.bias, &mut self.bias);
    }

    pub fn scale(&mut self, alpha: f64) {
        self.input.scale(alpha);
        self.state.scale(alpha);
        self.bias.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn squared_norm(&self) -> f64 {
        self.input
            .as_slice()
            .iter()
            .chain(self.state.as_slice())
            .chain(&self.bias)
            .map(|v| v * v)
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.input.is_finite() && self.state.is_finite() && self.bias.iter().all(|v| v.is_finite())
    }
}

/// All operator parameters of a learned dynamic model.
///
/// * `init` (A): `p×h`, `s₂ = σ(Aᵀx̃₁ + b_A)`
/// * `update` (B₁, B₂, b_B): `s_{t+1} = σ(B₁ᵀx̃_t + B₂ᵀs_t + b_B)`
/// * `decode` (C, a): `x̂_t = Cᵀs_t + a`
/// * `projections[j]` (D_j, d_j): `s_{t+2^j} = D_jᵀs_t + d_j`
///
/// where `x̃_t` is the augmented input of length `p = d·w + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SprParams {
    dims: ModelDims,
    pub init: Affine,
    pub update: Recurrent,
    pub decode: Affine,
    pub projections: Vec<Affine>,
}

impl SprParams {
    /// Builds a model from parts, checking every block against `dims`.
    pub fn from_parts(
        dims: ModelDims,
        init: Affine,
        update: Recurrent,
        decode: Affine,
        projections: Vec<Affine>,
    ) -> Result<Self> {
        let params = SprParams {
            dims,
            init,
            update,
            decode,
            projections,
        };
        params.validate()?;
        Ok(params)
    }

    /// Small random weights, zero biases, `⌊log₂T⌋+1` projections.
    pub fn init(dims: ModelDims, rng: &mut Rng, stddev: f64) -> Self {
        let (p, h, d) = (dims.input_dim(), dims.state_dim, dims.obs_dim);
        let init = Affine::random(p, h, stddev, rng);
        let update = Recurrent::random(p, h, stddev, rng);
        let decode = Affine::random(h, d, stddev, rng);
        let projections = (0..dims.projection_count())
            .map(|_| Affine::random(h, h, stddev, rng))
            .collect();
        SprParams {
            dims,
            init,
            update,
            decode,
            projections,
        }
    }

    /// All operators zero, identity projections.
    pub fn zeros(dims: ModelDims) -> Self {
        let (p, h, d) = (dims.input_dim(), dims.state_dim, dims.obs_dim);
        SprParams {
            dims,
            init: Affine::zeros(p, h),
            update: Recurrent::zeros(p, h),
            decode: Affine::zeros(h, d),
            projections: (0..dims.projection_count()).map(|_| Affine::identity(h)).collect(),
        }
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn obs_dim(&self) -> usize {
        self.dims.obs_dim
    }

    pub fn state_dim(&self) -> usize {
        self.dims.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.dims.input_dim()
    }

    pub fn window(&self) -> usize {
        self.dims.window
    }

    pub fn seq_len(&self) -> usize {
        self.dims.seq_len
    }

    pub fn validate(&self) -> Result<()> {
        let (p, h, d) = (self.input_dim(), self.state_dim(), self.obs_dim());
        let check = |ctx, expected: usize, actual: usize| {
            if expected == actual {
                Ok(())
            } else {
                Err(Error::dims(ctx, expected, actual))
            }
        };
        check("A rows", p, self.init.weights.rows())?;
        check("A cols", h, self.init.weights.cols())?;
        check("b_A length", h, self.init.bias.len())?;
        check("B1 rows", p, self.update.input.rows())?;
        check("B1 cols", h, self.update.input.cols())?;
        check("B2 rows", h, self.update.state.rows())?;
        check("B2 cols", h, self.update.state.cols())?;
        check("b_B length", h, self.update.bias.len())?;
        check("C rows", h, self.decode.weights.rows())?;
        check("C cols", d, self.decode.weights.cols())?;
        check("a length", d, self.decode.bias.len())?;
        if self.projections.is_empty() {
            return Err(Error::InvalidArgument("model has no projection operators".into()));
        }
        for proj in &self.projections {
            check("D_j rows", h, proj.weights.rows())?;
            check("D_j cols", h, proj.weights.cols())?;
            check("d_j length", h, proj.bias.len())?;
        }
        if !self.is_finite() {
            return Err(Error::InvalidArgument("model contains non-finite parameters".into()));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.init.is_finite()
            && self.update.is_finite()
            && self.decode.is_finite()
            && self.projections.iter().all(Affine::is_finite)
    }

    /// Bit-exact binary encoding (see `docs/model-format.md`).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new(MODEL_MAGIC);
        enc.u64(self.dims.obs_dim as u64)
            .u64(self.dims.state_dim as u64)
            .u64(self.dims.window as u64)
            .u64(self.dims.seq_len as u64)
            .u64(self.projections.len() as u64);
        enc.matrix(&self.init.weights)
            .f64s(&self.init.bias)
            .matrix(&self.update.input)
            .matrix(&self.update.state)
            .f64s(&self.update.bias)
            .matrix(&self.decode.weights)
            .f64s(&self.decode.bias);
        for proj in &self.projections {
            enc.matrix(&proj.weights).f64s(&proj.bias);
        }
        enc.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut dec = Decoder::new(bytes, MODEL_MAGIC)?;
        let d = dec.dim("obs_dim")?;
        let h = dec.dim("state_dim")?;
        let w = dec.dim("window")?;
        let seq_len = dec.dim("seq_len")?;
        let n_proj = dec.dim("projection count")?;
        if n_proj > 64 {
            return Err(dec.corrupt(format!("implausible projection count {n_proj}")));
        }
        let dims = ModelDims::new(d, h, seq_len, w).map_err(|e| dec.corrupt(e.to_string()))?;
        let p = dims.input_dim();
        let init = Affine {
            weights: dec.matrix(p, h, "A")?,
            bias: dec.f64s(h, "b_A")?,
        };
        let update = Recurrent {
            input: dec.matrix(p, h, "B1")?,
            state: dec.matrix(h, h, "B2")?,
            bias: dec.f64s(h, "b_B")?,
        };
        let decode = Affine {
            weights: dec.matrix(h, d, "C")?,
            bias: dec.f64s(d, "a")?,
        };
        let mut projections = Vec::with_capacity(n_proj);
        for j in 0..n_proj {
            let what = format!("D_{j}");
            projections.push(Affine {
                weights: dec.matrix(h, h, &what)?,
                bias: dec.f64s(h, &format!("d_{j}"))?,
            });
        }
        dec.finish()?;
        Ok(SprParams {
            dims,
            init,
            update,
            decode,
            projections,
        })
    }
}
