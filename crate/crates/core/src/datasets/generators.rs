use super::Sequence;
use crate::baselines::DiscreteHmm;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

/// Sequences `000` / `101`: a uniform first symbol, a forced `0`, then the
/// first symbol repeated.
pub fn generate_example41(n: usize, seed: u64) -> Vec<Sequence> {
    let root = Rng::new(seed).substream("example41");
    (0..n)
        .map(|i| {
            let mut rng = root.substream_indexed("sequence", i as u64);
            let first = if rng.bernoulli(0.5) { 1.0 } else { 0.0 };
            Sequence::from_scalars(format!("ex41-{i:05}"), &[first, 0.0, first]).expect("nonempty")
        })
        .collect()
}

/// State-space HMM that produces the `000` / `101` sequences.
///
/// States are `(stored bit, phase)`: `0:(0,1) 1:(1,1) 2:(0,2) 3:(1,2)`.
/// Phase-1 states always emit `0`; phase-2 states emit their stored bit.
/// The chain starts uniformly in a phase-2 state and alternates phases.
pub fn example41_model() -> DiscreteHmm {
    let initial = vec![0.0, 0.0, 0.5, 0.5];
    let transition = Matrix::from_rows(&[
        vec![0.0, 0.0, 1.0, 0.0],
        vec![0.0, 0.0, 0.0, 1.0],
        vec![1.0, 0.0, 0.0, 0.0],
        vec![0.0, 1.0, 0.0, 0.0],
    ])
    .expect("static shape");
    let emission = Matrix::from_rows(&[
        vec![1.0, 0.0],
        vec![1.0, 0.0],
        vec![1.0, 0.0],
        vec![0.0, 1.0],
    ])
    .expect("static shape");
    DiscreteHmm::new(initial, transition, emission).expect("valid model")
}

/// Two absorbing states chosen uniformly; state 0 emits symbol `0` with
/// probability 0.75, state 1 with probability 0.25.
pub fn example42_model() -> DiscreteHmm {
    let emission = Matrix::from_rows(&[vec![0.75, 0.25], vec![0.25, 0.75]]).expect("static shape");
    DiscreteHmm::new(vec![0.5, 0.5], Matrix::identity(2), emission).expect("valid model")
}

/// Sampled long-range HMM data together with its generating model.
#[derive(Debug, Clone)]
pub struct Example42Data {
    pub sequences: Vec<Sequence>,
    pub model: DiscreteHmm,
    /// Hidden state of each sequence (constant in time).
    pub states: Vec<usize>,
}

pub fn generate_example42(n: usize, len: usize, seed: u64) -> Result<Example42Data> {
    if n == 0 || len == 0 {
        return Err(Error::InvalidArgument("example42 needs n >= 1 and T >= 1".into()));
    }
    let model = example42_model();
    let root = Rng::new(seed).substream("example42");
    let mut sequences = Vec::with_capacity(n);
    let mut states = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = root.substream_indexed("sequence", i as u64);
        let (path, symbols) = model.sample(len, &mut rng);
        let values: Vec<f64> = symbols.iter().map(|&s| s as f64).collect();
        sequences.push(Sequence::from_scalars(format!("ex42-{i:05}"), &values)?);
        states.push(path[0]);
    }
    Ok(Example42Data {
        sequences,
        model,
        states,
    })
}

/// Maps `0.0 / 1.0` observations back to symbol indices.
pub fn symbols_of(seq: &Sequence) -> Result<Vec<usize>> {
    (1..=seq.len())
        .map(|t| {
            let v = seq.x(t)[0];
            if v == 0.0 {
                Ok(0)
            } else if v == 1.0 {
                Ok(1)
            } else {
                Err(Error::InvalidArgument(format!(
                    "sequence `{}` holds non-binary value {v} at t = {t}",
                    seq.id()
                )))
            }
        })
        .collect()
}

/// Parameters of the continuous nonlinear oscillator.
///
/// The latent `z ∈ ℝ²` rotates by a state-dependent angle
/// `θ(z) = base_angle + angle_gain·tanh(angle_sharpness·z₀)` and is pulled
/// radially toward the unit circle:
///
/// `z' = (1 + radial_rate·(1 − ‖z‖))·R(θ(z))·z + ε`, `ε ~ N(0, process_noise²·I)`.
///
/// Observations are `x = W z + c + η`, `η ~ N(0, obs_noise²·I)`, with the
/// lift `W` (`d×2`) and offset `c` drawn once from `N(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearSpec {
    pub n_sequences: usize,
    pub length: usize,
    pub obs_dim: usize,
    pub seed: u64,
    pub base_angle: f64,
    pub angle_gain: f64,
    pub angle_sharpness: f64,
    pub radial_rate: f64,
    pub process_noise: f64,
    pub obs_noise: f64,
}

impl NonlinearSpec {
    pub fn new(n_sequences: usize, length: usize, obs_dim: usize, seed: u64) -> Self {
        NonlinearSpec {
            n_sequences,
            length,
            obs_dim,
            seed,
            base_angle: 0.45,
            angle_gain: 0.3,
            angle_sharpness: 2.0,
            radial_rate: 0.5,
            process_noise: 0.01,
            obs_noise: 0.05,
        }
    }

    /// The latent map without noise.
    pub fn step(&self, z: [f64; 2]) -> [f64; 2] {
        let theta = self.base_angle + self.angle_gain * (self.angle_sharpness * z[0]).tanh();
        let (sin, cos) = theta.sin_cos();
        let radius = (z[0] * z[0] + z[1] * z[1]).sqrt();
        let gain = 1.0 + self.radial_rate * (1.0 - radius);
        [gain * (cos * z[0] - sin * z[1]), gain * (sin * z[0] + cos * z[1])]
    }
}

/// Generated continuous data plus the latent trajectories and lift.
#[derive(Debug, Clone)]
pub struct NonlinearData {
    pub sequences: Vec<Sequence>,
    pub latents: Vec<Vec<[f64; 2]>>,
    /// `d×2` lift matrix `W`.
    pub lift: Matrix,
    pub offset: Vec<f64>,
}

pub fn generate_nonlinear_cts(spec: &NonlinearSpec) -> Result<NonlinearData> {
    if spec.n_sequences == 0 || spec.length == 0 || spec.obs_dim == 0 {
        return Err(Error::InvalidArgument(format!(
            "nonlinear generator needs positive counts: {spec:?}"
        )));
    }
    if !(spec.process_noise >= 0.0 && spec.obs_noise >= 0.0) {
        return Err(Error::InvalidArgument("noise levels must be nonnegative".into()));
    }
    let root = Rng::new(spec.seed).substream("nonlinear_cts");
    let mut lift_rng = root.substream("lift");
    let d = spec.obs_dim;
    let lift = Matrix::from_vec(d, 2, lift_rng.normals(2 * d, 0.0, 1.0))?;
    let offset = lift_rng.normals(d, 0.0, 1.0);

    let mut sequences = Vec::with_capacity(spec.n_sequences);
    let mut latents = Vec::with_capacity(spec.n_sequences);
    for i in 0..spec.n_sequences {
        let mut rng = root.substream_indexed("sequence", i as u64);
        let phase = std::f64::consts::TAU * rng.uniform();
        let mut z = [phase.cos(), phase.sin()];
        let mut path = Vec::with_capacity(spec.length);
        let mut rows = Vec::with_capacity(spec.length * d);
        for t in 0..spec.length {
            if t > 0 {
                let next = spec.step(z);
                z = [
                    next[0] + spec.process_noise * rng.standard_normal(),
                    next[1] + spec.process_noise * rng.standard_normal(),
                ];
            }
            path.push(z);
            for r in 0..d {
                let clean = lift[(r, 0)] * z[0] + lift[(r, 1)] * z[1] + offset[r];
                rows.push(clean + spec.obs_noise * rng.standard_normal());
            }
        }
        sequences.push(Sequence::new(
            format!("cts-{i:05}"),
            Matrix::from_vec(spec.length, d, rows)?,
        )?);
        latents.push(path);
    }
    Ok(NonlinearData {
        sequences,
        latents,
        lift,
        offset,
    })
}
