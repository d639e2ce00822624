use super::params::SprParams;
use crate::datasets::Sequence;
use crate::error::{Error, Result};
use crate::numerics::{logistic, logistic_in_place};

/// Lower and upper bound applied to projected states.
pub const PROJECTION_CLAMP: f64 = 1e-6;

/// Model input at time `t`: `[x_t, x_{t-1}, …, x_{t-w+1}, t/T]`, with
/// observations before the sequence start zero-filled and the timestep
/// feature capped at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedInput(Vec<f64>);

impl AugmentedInput {
    pub fn build(seq: &Sequence, t: usize, window: usize, seq_len: usize) -> Result<Self> {
        if t == 0 || t > seq.len() {
            return Err(Error::HorizonOutOfRange(format!(
                "time index {t} outside 1..={} for `{}`",
                seq.len(),
                seq.id()
            )));
        }
        let d = seq.obs_dim();
        let mut values = vec![0.0; d * window + 1];
        for lag in 0..window.min(t) {
            values[lag * d..(lag + 1) * d].copy_from_slice(seq.x(t - lag));
        }
        values[d * window] = (t as f64 / seq_len as f64).min(1.0);
        Ok(AugmentedInput(values))
    }

    pub fn for_model(params: &SprParams, seq: &Sequence, t: usize) -> Result<Self> {
        if seq.obs_dim() != params.obs_dim() {
            return Err(Error::dims("sequence obs_dim", params.obs_dim(), seq.obs_dim()));
        }
        Self::build(seq, t, params.window(), params.seq_len())
    }

    /// Wraps raw values; the caller owns the layout.
    pub fn from_values(values: Vec<f64>) -> Self {
        AugmentedInput(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Posterior sufficient statistic `s_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub values: Vec<f64>,
    pub time: usize,
}

fn check_input(params: &SprParams, x: &AugmentedInput) -> Result<()> {
    if x.len() != params.input_dim() {
        return Err(Error::dims("augmented input", params.input_dim(), x.len()));
    }
    Ok(())
}

fn check_state(params: &SprParams, s: &State) -> Result<()> {
    if s.values.len() != params.state_dim() {
        return Err(Error::dims("state", params.state_dim(), s.values.len()));
    }
    Ok(())
}

/// `s₂ = σ(Aᵀx̃₁ + b_A)`.
pub fn apply_a(params: &SprParams, x1: &AugmentedInput) -> Result<State> {
    check_input(params, x1)?;
    let mut values = params.init.apply(x1.values())?;
    logistic_in_place(&mut values);
    Ok(State { values, time: 2 })
}

/// `s_{t+1} = σ(B₁ᵀx̃_t + B₂ᵀs_t + b_B)`.
pub fn apply_b(params: &SprParams, x: &AugmentedInput, s: &State) -> Result<State> {
    check_input(params, x)?;
    check_state(params, s)?;
    let z = params.update.preactivation(x.values(), &s.values)?;
    Ok(State {
        values: logistic(&z),
        time: s.time + 1,
    })
}

/// `x̂_t = Cᵀs_t + a`.
pub fn apply_c(params: &SprParams, s: &State) -> Result<Vec<f64>> {
    check_state(params, s)?;
    params.decode.apply(&s.values)
}

/// `s_{t+2^j} = clamp(D_jᵀs_t + d_j)`.
pub fn apply_d(params: &SprParams, j: u32, s: &State) -> Result<State> {
    check_state(params, s)?;
    let proj = params
        .projections
        .get(j as usize)
        .ok_or(Error::UnknownExponent(j))?;
    let mut values = proj.apply(&s.values)?;
    for v in &mut values {
        *v = v.clamp(PROJECTION_CLAMP, 1.0 - PROJECTION_CLAMP);
    }
    Ok(State {
        values,
        time: s.time + (1usize << j),
    })
}

/// Runs the state recursion over `x_1..x_upto` and returns `s_{upto+1}`.
pub fn filter(params: &SprParams, seq: &Sequence, upto: usize) -> Result<State> {
    if upto == 0 || seq.is_empty() {
        return Err(Error::EmptySequence(seq.id().to_string()));
    }
    if upto > seq.len() {
        return Err(Error::HorizonOutOfRange(format!(
            "filter prefix {upto} exceeds sequence length {} of `{}`",
            seq.len(),
            seq.id()
        )));
    }
    let mut s = apply_a(params, &AugmentedInput::for_model(params, seq, 1)?)?;
    for t in 2..=upto {
        s = apply_b(params, &AugmentedInput::for_model(params, seq, t)?, &s)?;
    }
    Ok(s)
}

/// Every filtered state `s_2, …, s_{T+1}` of a sequence.
pub fn filter_all(params: &SprParams, seq: &Sequence) -> Result<Vec<State>> {
    if seq.is_empty() {
        return Err(Error::EmptySequence(seq.id().to_string()));
    }
    let mut states = Vec::with_capacity(seq.len());
    let mut s = apply_a(params, &AugmentedInput::for_model(params, seq, 1)?)?;
    for t in 2..=seq.len() {
        let next = apply_b(params, &AugmentedInput::for_model(params, seq, t)?, &s)?;
        states.push(std::mem::replace(&mut s, next));
    }
    states.push(s);
    Ok(states)
}

/// Exponents of the binary expansion of `gap`, largest first.
pub fn decompose_gap(gap: u64) -> Vec<u32> {
    (0..u64::BITS).rev().filter(|&j| gap >> j & 1 == 1).collect()
}

/// Advances a filtered state across `gap` steps with the projection chain.
pub fn project(params: &SprParams, mut s: State, gap: u64) -> Result<State> {
    for j in decompose_gap(gap) {
        s = apply_d(params, j, &s).map_err(|e| match e {
            Error::UnknownExponent(j) => Error::HorizonOutOfRange(format!(
                "gap {gap} needs projection exponent {j}, model has 0..{}",
                params.projections.len()
            )),
            other => other,
        })?;
    }
    Ok(s)
}

/// Predicts `x_{t+k}` from `x_1..x_t`: filter to `s_{t+1}`, project across
/// the remaining `k − 1` steps, decode.
pub fn predict_horizon(params: &SprParams, seq: &Sequence, t: usize, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::HorizonOutOfRange("horizon must be at least 1".into()));
    }
    let s = filter(params, seq, t)?;
    predict_from_state(params, s, k)
}

/// Horizon-`k` prediction from an already filtered `s_{t+1}`.
pub fn predict_from_state(params: &SprParams, s: State, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::HorizonOutOfRange("horizon must be at least 1".into()));
    }
    let s = project(params, s, k as u64 - 1)?;
    apply_c(params, &s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Matrix, Rng};
    use crate::spr::{Affine, ModelDims};
    use proptest::prelude::*;

    fn seq(values: &[f64]) -> Sequence {
        Sequence::from_scalars("s", values).unwrap()
    }

    fn random_params(seed: u64, d: usize, h: usize, t: usize, scale: f64) -> SprParams {
        let dims = ModelDims::new(d, h, t, 2).unwrap();
        let mut p = SprParams::init(dims, &mut Rng::new(seed), scale);
        let mut rng = Rng::new(seed ^ 0xabc);
        p.init.bias = rng.normals(h, 0.0, scale);
        p.update.bias = rng.normals(h, 0.0, scale);
        p.decode.bias = rng.normals(d, 0.0, scale);
        p
    }

    #[test]
    fn augmented_input_layout() {
        let s = Sequence::from_rows("a", &[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let x1 = AugmentedInput::build(&s, 1, 2, 4).unwrap();
        assert_eq!(x1.values(), &[1.0, 2.0, 0.0, 0.0, 0.25]);
        let x3 = AugmentedInput::build(&s, 3, 2, 4).unwrap();
        assert_eq!(x3.values(), &[5.0, 6.0, 3.0, 4.0, 0.75]);
        let late = AugmentedInput::build(&s, 3, 1, 2).unwrap();
        assert_eq!(late.values(), &[5.0, 6.0, 1.0]);
    }

    #[test]
    fn zero_params_give_half_states() {
        let dims = ModelDims::new(1, 3, 4, 2).unwrap();
        let p = SprParams::zeros(dims);
        let s = seq(&[0.3, -2.0, 7.0, 1.0]);
        let x1 = AugmentedInput::for_model(&p, &s, 1).unwrap();
        assert_eq!(apply_a(&p, &x1).unwrap().values, vec![0.5; 3]);
        for upto in 1..=4 {
            assert_eq!(filter(&p, &s, upto).unwrap().values, vec![0.5; 3]);
        }
        let other = seq(&[9.0, 9.0, 9.0, 9.0]);
        let x1b = AugmentedInput::for_model(&p, &other, 1).unwrap();
        assert_eq!(apply_a(&p, &x1b).unwrap(), apply_a(&p, &x1).unwrap());
        let st = State { values: vec![0.2, 0.9, 0.4], time: 5 };
        let next = apply_b(&p, &x1, &st).unwrap();
        assert_eq!(next.values, vec![0.5; 3]);
        assert_eq!(next.time, 6);
        assert_eq!(apply_c(&p, &st).unwrap(), vec![0.0]);
    }

    #[test]
    fn closed_form_single_unit() {
        let dims = ModelDims::new(1, 1, 1, 1).unwrap();
        let mut p = SprParams::zeros(dims);
        // p = 2: observation and timestep feature.
        p.init.weights = Matrix::from_vec(2, 1, vec![3f64.ln(), 0.0]).unwrap();
        let x = AugmentedInput::from_values(vec![1.0, 0.0]);
        assert!((apply_a(&p, &x).unwrap().values[0] - 0.75).abs() < 1e-15);

        p.update.state = Matrix::identity(1);
        let s = State { values: vec![0.5], time: 2 };
        let out = apply_b(&p, &x, &s).unwrap();
        assert!((out.values[0] - 1.0 / (1.0 + (-0.5f64).exp())).abs() < 1e-15);
        assert!((out.values[0] - 0.62246).abs() < 1e-5);
    }

    #[test]
    fn decode_examples() {
        let dims = ModelDims::new(1, 2, 4, 1).unwrap();
        let mut p = SprParams::zeros(dims);
        p.decode.bias = vec![-1.5];
        let s = State { values: vec![0.25, 0.75], time: 3 };
        assert_eq!(apply_c(&p, &s).unwrap(), vec![-1.5]);
        p.decode = Affine {
            weights: Matrix::from_vec(2, 1, vec![1.0, 1.0]).unwrap(),
            bias: vec![1.0],
        };
        assert_eq!(apply_c(&p, &s).unwrap(), vec![2.0]);
    }

    #[test]
    fn projection_examples() {
        let dims = ModelDims::new(1, 2, 16, 1).unwrap();
        let mut p = SprParams::zeros(dims);
        let s = State { values: vec![0.3, 0.6], time: 4 };
        let same = apply_d(&p, 0, &s).unwrap();
        assert_eq!(same.values, s.values);
        assert_eq!(same.time, 5);
        assert_eq!(apply_d(&p, 3, &s).unwrap().time, 12);
        p.projections[1] = Affine {
            weights: Matrix::zeros(2, 2),
            bias: vec![0.1, 0.8],
        };
        assert_eq!(apply_d(&p, 1, &s).unwrap().values, vec![0.1, 0.8]);
        assert!(matches!(apply_d(&p, 5, &s), Err(Error::UnknownExponent(5))));
        p.projections[2].bias = vec![5.0, -5.0];
        let clamped = apply_d(&p, 2, &s).unwrap();
        assert_eq!(clamped.values, vec![1.0 - PROJECTION_CLAMP, PROJECTION_CLAMP]);
    }

    #[test]
    fn gap_decomposition() {
        assert!(decompose_gap(0).is_empty());
        assert_eq!(decompose_gap(24), vec![4, 3]);
        assert_eq!(decompose_gap(10), vec![3, 1]);
        assert_eq!(decompose_gap(1), vec![0]);
    }

    #[test]
    fn filter_base_case_and_recursion() {
        let p = random_params(3, 2, 3, 6, 0.8);
        let s = Sequence::from_rows(
            "r",
            &(0..6).map(|i| vec![i as f64 * 0.3, 1.0 - i as f64]).collect::<Vec<_>>(),
        )
        .unwrap();
        let base = apply_a(&p, &AugmentedInput::for_model(&p, &s, 1).unwrap()).unwrap();
        assert_eq!(filter(&p, &s, 1).unwrap(), base);
        for t in 1..6 {
            let prev = filter(&p, &s, t).unwrap();
            let x = AugmentedInput::for_model(&p, &s, t + 1).unwrap();
            assert_eq!(filter(&p, &s, t + 1).unwrap(), apply_b(&p, &x, &prev).unwrap());
        }
        let all = filter_all(&p, &s).unwrap();
        assert_eq!(all.len(), 6);
        assert_eq!(all[5], filter(&p, &s, 6).unwrap());
        assert!(matches!(filter(&p, &s, 0), Err(Error::EmptySequence(_))));
        assert!(matches!(filter(&p, &s, 7), Err(Error::HorizonOutOfRange(_))));
    }

    #[test]
    fn horizon_prediction_semantics() {
        let p = random_params(9, 1, 4, 50, 0.5);
        let s = seq(&(0..40).map(|i| (i as f64 * 0.4).sin()).collect::<Vec<_>>());
        let t = 20;
        let k1 = predict_horizon(&p, &s, t, 1).unwrap();
        assert_eq!(k1, apply_c(&p, &filter(&p, &s, t).unwrap()).unwrap());

        let manual = {
            let st = filter(&p, &s, t).unwrap();
            let st = apply_d(&p, 4, &st).unwrap();
            let st = apply_d(&p, 3, &st).unwrap();
            assert_eq!(st.time, t + 25);
            apply_c(&p, &st).unwrap()
        };
        assert_eq!(predict_horizon(&p, &s, t, 25).unwrap(), manual);

        let small = random_params(9, 1, 4, 4, 0.5);
        assert!(matches!(
            predict_horizon(&small, &s, t, 10),
            Err(Error::HorizonOutOfRange(_))
        ));
        assert!(predict_horizon(&p, &s, t, 0).is_err());
    }

    #[test]
    fn identity_projections_make_horizon_irrelevant() {
        let dims = ModelDims::new(1, 3, 32, 2).unwrap();
        let mut p = SprParams::init(dims, &mut Rng::new(4), 0.5);
        p.projections = (0..dims.projection_count()).map(|_| Affine::identity(3)).collect();
        let s = seq(&[0.1, 0.5, -0.2, 0.9, 0.3]);
        let base = predict_horizon(&p, &s, 4, 1).unwrap();
        for k in [2, 4, 8, 10, 16, 25] {
            assert_eq!(predict_horizon(&p, &s, 4, k).unwrap(), base);
        }
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        let p = random_params(1, 2, 3, 5, 0.1);
        let wrong = AugmentedInput::from_values(vec![0.0; 4]);
        assert!(matches!(apply_a(&p, &wrong), Err(Error::DimensionMismatch { .. })));
        let bad_state = State { values: vec![0.5; 2], time: 2 };
        assert!(matches!(apply_c(&p, &bad_state), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(filter(&p, &seq(&[1.0, 2.0]), 1), Err(Error::DimensionMismatch { .. })));
    }

    proptest! {
        #[test]
        fn gap_expansion_sums_back(g in 0u64..=(1 << 20)) {
            let js = decompose_gap(g);
            prop_assert_eq!(js.iter().map(|&j| 1u64 << j).sum::<u64>(), g);
            prop_assert!(js.windows(2).all(|w| w[0] > w[1]));
        }

        #[test]
        fn filtered_states_stay_in_unit_interval(seed in 0u64..500, scale in 0.01f64..20.0) {
            let p = random_params(seed, 2, 3, 8, scale);
            let mut rng = Rng::new(seed + 1);
            let rows: Vec<Vec<f64>> = (0..8).map(|_| rng.normals(2, 0.0, 3.0)).collect();
            let s = Sequence::from_rows("p", &rows).unwrap();
            for st in filter_all(&p, &s).unwrap() {
                prop_assert!(st.values.iter().all(|&v| v > 0.0 && v < 1.0));
            }
            for k in [1, 2, 3, 7] {
                let a = predict_horizon(&p, &s, 4, k).unwrap();
                let b = predict_horizon(&p, &s, 4, k).unwrap();
                prop_assert!(a.iter().all(|v| v.is_finite()));
                prop_assert_eq!(
                    a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                    b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
                );
            }
        }
    }
}
