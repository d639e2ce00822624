use crate::datasets::Sequence;
use crate::error::{Error, Result};
use crate::numerics::logistic_in_place;
use crate::spr::{Affine, AugmentedInput, Recurrent, SprParams};

/// Gradient with the same block layout as the filter operators of
/// [`SprParams`] (projections are not part of the filter loss).
#[derive(Debug, Clone, PartialEq)]
pub struct SprGradient {
    pub init: Affine,
    pub update: Recurrent,
    pub decode: Affine,
}

impl SprGradient {
    pub fn zeros(params: &SprParams) -> Self {
        let (p, h, d) = (params.input_dim(), params.state_dim(), params.obs_dim());
        SprGradient {
            init: Affine::zeros(p, h),
            update: Recurrent::zeros(p, h),
            decode: Affine::zeros(h, d),
        }
    }

    pub fn add(&mut self, other: &SprGradient) {
        self.init.axpy(1.0, &other.init);
        self.update.axpy(1.0, &other.update);
        self.decode.axpy(1.0, &other.decode);
    }

    pub fn squared_norm(&self) -> f64 {
        self.init.squared_norm() + self.update.squared_norm() + self.decode.squared_norm()
    }

    pub fn is_finite(&self) -> bool {
        self.init.is_finite() && self.update.is_finite() && self.decode.is_finite()
    }
}

/// Filter loss of one sequence, `Σ_{t=2}^{T} ‖C(s_t) − x_t‖²`.
pub fn sequence_loss(params: &SprParams, seq: &Sequence) -> Result<f64> {
    Ok(unroll(params, seq)?.loss)
}

struct Unrolled {
    inputs: Vec<AugmentedInput>,
    /// `states[i]` is `s_{i+2}`.
    states: Vec<Vec<f64>>,
    /// `residuals[i]` is `C(s_{i+2}) − x_{i+2}`.
    residuals: Vec<Vec<f64>>,
    loss: f64,
}

fn unroll(params: &SprParams, seq: &Sequence) -> Result<Unrolled> {
    let len = seq.len();
    if len < 2 {
        return Err(Error::InvalidArgument(format!(
            "sequence `{}` has length {len}; the filter loss needs at least 2 observations",
            seq.id()
        )));
    }
    let inputs = (1..len)
        .map(|t| AugmentedInput::for_model(params, seq, t))
        .collect::<Result<Vec<_>>>()?;
    let mut states = Vec::with_capacity(len - 1);
    let mut s = params.init.apply(inputs[0].values())?;
    logistic_in_place(&mut s);
    states.push(s);
    for x in &inputs[1..] {
        let mut next = params.update.preactivation(x.values(), states.last().expect("nonempty"))?;
        logistic_in_place(&mut next);
        states.push(next);
    }
    let mut residuals = Vec::with_capacity(len - 1);
    let mut loss = 0.0;
    for (i, s) in states.iter().enumerate() {
        let mut r = params.decode.apply(s)?;
        for (v, x) in r.iter_mut().zip(seq.x(i + 2)) {
            *v -= x;
        }
        loss += r.iter().map(|v| v * v).sum::<f64>();
        residuals.push(r);
    }
    if !loss.is_finite() {
        return Err(Error::non_finite("filter loss"));
    }
    Ok(Unrolled {
        inputs,
        states,
        residuals,
        loss,
    })
}

/// Exact gradient of the filter loss by backpropagation through time,
/// with every path from the shared update through later timesteps.
/// Returns the loss alongside.
pub fn bptt_gradient(params: &SprParams, seq: &Sequence) -> Result<(f64, SprGradient)> {
    let u = unroll(params, seq)?;
    let mut grad = SprGradient::zeros(params);
    let h = params.state_dim();
    let mut ds = vec![0.0; h];
    for i in (0..u.states.len()).rev() {
        let s = &u.states[i];
        let r = &u.residuals[i];
        grad.decode.weights.add_outer(2.0, s, r);
        for (g, v) in grad.decode.bias.iter_mut().zip(r) {
            *g += 2.0 * v;
        }
        let back = params.decode.weights.mul_vec(r)?;
        for (d, b) in ds.iter_mut().zip(&back) {
            *d += 2.0 * b;
        }
        let dz: Vec<f64> = ds.iter().zip(s).map(|(d, s)| d * s * (1.0 - s)).collect();
        if i == 0 {
            grad.init.weights.add_outer(1.0, u.inputs[0].values(), &dz);
            crate::numerics::axpy(1.0, &dz, &mut grad.init.bias);
        } else {
            grad.update.input.add_outer(1.0, u.inputs[i].values(), &dz);
            grad.update.state.add_outer(1.0, &u.states[i - 1], &dz);
            crate::numerics::axpy(1.0, &dz, &mut grad.update.bias);
            ds = params.update.state.mul_vec(&dz)?;
        }
    }
    if !grad.is_finite() {
        return Err(Error::non_finite("filter gradient"));
    }
    Ok((u.loss, grad))
}

/// Mutable views of every filter parameter block, in a fixed order shared
/// with [`gradient_blocks`].
pub fn filter_blocks_mut(params: &mut SprParams) -> [&mut [f64]; 7] {
    [
        params.init.weights.as_mut_slice(),
        &mut params.init.bias,
        params.update.input.as_mut_slice(),
        params.update.state.as_mut_slice(),
        &mut params.update.bias,
        params.decode.weights.as_mut_slice(),
        &mut params.decode.bias,
    ]
}

pub fn gradient_blocks(grad: &SprGradient) -> [&[f64]; 7] {
    [
        grad.init.weights.as_slice(),
        &grad.init.bias,
        grad.update.input.as_slice(),
        grad.update.state.as_slice(),
        &grad.update.bias,
        grad.decode.weights.as_slice(),
        &grad.decode.bias,
    ]
}

pub(crate) fn clip_update(update: &mut Recurrent, max_norm: f64) {
    let norm = update.squared_norm().sqrt();
    if norm > max_norm {
        update.scale(max_norm / norm);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Matrix, Rng};
    use crate::spr::ModelDims;

    fn instance(seed: u64) -> (SprParams, Sequence) {
        let mut rng = Rng::new(seed);
        let d = 1 + rng.below(3);
        let h = 1 + rng.below(4);
        let len = 2 + rng.below(5);
        let w = 1 + rng.below(2);
        let dims = ModelDims::new(d, h, len, w).unwrap();
        let mut params = SprParams::init(dims, &mut rng, 0.7);
        for b in filter_blocks_mut(&mut params) {
            for v in b.iter_mut() {
                *v += rng.normal(0.0, 0.3);
            }
        }
        let obs = Matrix::from_vec(len, d, rng.normals(len * d, 0.0, 1.0)).unwrap();
        (params, Sequence::new("fd", obs).unwrap())
    }

    // Central differences over every filter parameter.
    fn numeric_gradient(params: &SprParams, seq: &Sequence, eps: f64) -> Vec<Vec<f64>> {
        let mut work = params.clone();
        let sizes: Vec<usize> = filter_blocks_mut(&mut work).iter().map(|b| b.len()).collect();
        let mut out = Vec::new();
        for (bi, &n) in sizes.iter().enumerate() {
            let mut g = Vec::with_capacity(n);
            for k in 0..n {
                let orig = filter_blocks_mut(&mut work)[bi][k];
                filter_blocks_mut(&mut work)[bi][k] = orig + eps;
                let plus = sequence_loss(&work, seq).unwrap();
                filter_blocks_mut(&mut work)[bi][k] = orig - eps;
                let minus = sequence_loss(&work, seq).unwrap();
                filter_blocks_mut(&mut work)[bi][k] = orig;
                g.push((plus - minus) / (2.0 * eps));
            }
            out.push(g);
        }
        out
    }

    #[test]
    fn matches_central_differences() {
        for seed in 0..25 {
            let (params, seq) = instance(seed);
            let (_, grad) = bptt_gradient(&params, &seq).unwrap();
            let numeric = numeric_gradient(&params, &seq, 1e-5);
            for (analytic, numeric) in gradient_blocks(&grad).iter().zip(&numeric) {
                for (a, n) in analytic.iter().zip(numeric) {
                    let scale = a.abs().max(n.abs()).max(1e-6);
                    assert!((a - n).abs() / scale < 1e-4, "seed {seed}: {a} vs {n}");
                }
            }
        }
    }

    #[test]
    fn zero_decoder_and_targets_give_zero_decoder_gradient() {
        let (mut params, seq) = instance(3);
        params.decode = Affine::zeros(params.state_dim(), params.obs_dim());
        let zero = Sequence::new("z", Matrix::zeros(seq.len(), seq.obs_dim())).unwrap();
        let (loss, grad) = bptt_gradient(&params, &zero).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(grad.decode.squared_norm(), 0.0);
        assert_eq!(grad.init.squared_norm(), 0.0);
    }

    #[test]
    fn short_sequence_rejected() {
        let (params, _) = instance(1);
        let one = Sequence::new("o", Matrix::zeros(1, params.obs_dim())).unwrap();
        assert!(bptt_gradient(&params, &one).is_err());
    }
}
