use super::config::TrainConfig;
use super::report::TrainReport;
use crate::datasets::{common_obs_dim, Sequence};
use crate::error::{Error, Result};
use crate::numerics::{logistic_in_place, squared_distance, Matrix, Rng};
use crate::spr::{Affine, AugmentedInput, ModelDims, Recurrent, SprParams};

/// Separate update and decoder operators for every timestep, with the
/// shared state initialization `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerTimestepParams {
    dims: ModelDims,
    pub init: Affine,
    /// `updates[i]` is `B_{i+2}`.
    pub updates: Vec<Recurrent>,
    /// `decoders[i]` is `C_{i+2}`.
    pub decoders: Vec<Affine>,
}

impl PerTimestepParams {
    pub fn new(dims: ModelDims, init: Affine, updates: Vec<Recurrent>, decoders: Vec<Affine>) -> Result<Self> {
        if updates.is_empty() || updates.len() != decoders.len() {
            return Err(Error::dims("per-timestep stack length", updates.len().max(1), decoders.len()));
        }
        let per = PerTimestepParams {
            dims,
            init,
            updates,
            decoders,
        };
        // Every timestep must slot into one well-formed shared model.
        for t in per.first_time()..=per.last_time() {
            per.at(t)?.validate()?;
        }
        Ok(per)
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn first_time(&self) -> usize {
        2
    }

    pub fn last_time(&self) -> usize {
        self.updates.len() + 1
    }

    pub fn update(&self, t: usize) -> Option<&Recurrent> {
        self.updates.get(t.checked_sub(2)?)
    }

    pub fn decoder(&self, t: usize) -> Option<&Affine> {
        self.decoders.get(t.checked_sub(2)?)
    }

    /// Shared-form model using timestep `t`'s operators everywhere.
    fn at(&self, t: usize) -> Result<SprParams> {
        let h = self.dims.state_dim;
        SprParams::from_parts(
            self.dims,
            self.init.clone(),
            self.update(t).cloned().ok_or(Error::UnknownHorizon(t))?,
            self.decoder(t).cloned().ok_or(Error::UnknownHorizon(t))?,
            (0..self.dims.projection_count()).map(|_| Affine::identity(h)).collect(),
        )
    }
}

/// One training case of a timestep stage: the layer input `x̃_{t−1}`, the
/// previous state `s_{t−1}` (empty at `t = 2`) and the target `x_t`.
struct Case {
    input: Vec<f64>,
    prev: Vec<f64>,
    seq: usize,
}

fn stage_loss(layer: &Recurrent, decoder: &Affine, cases: &[Case], data: &[Sequence], t: usize) -> Result<f64> {
    let mut total = 0.0;
    for c in cases {
        let mut s = layer.preactivation(&c.input, &c.prev)?;
        logistic_in_place(&mut s);
        total += squared_distance(&decoder.apply(&s)?, data[c.seq].x(t));
    }
    Ok(total / (cases.len() * decoder.output_dim()) as f64)
}

// SGD on ‖C(σ(layer(x̃, s))) − x_t‖² over single cases in shuffled passes.
#[allow(clippy::too_many_arguments)]
fn train_stage(
    layer: &mut Recurrent,
    decoder: &mut Affine,
    cases: &[Case],
    data: &[Sequence],
    t: usize,
    cfg: &TrainConfig,
    rng: &mut Rng,
    report: &mut TrainReport,
) -> Result<()> {
    let name = format!("initialization/t={t}");
    let record = |layer: &Recurrent, decoder: &Affine, it: usize, report: &mut TrainReport| -> Result<()> {
        let loss = stage_loss(layer, decoder, cases, data, t)?;
        if !loss.is_finite() {
            return Err(Error::non_finite(name.clone()));
        }
        report.push(name.clone(), it, loss);
        Ok(())
    };
    record(layer, decoder, 0, report)?;
    let lr = cfg.learning_rate;
    let mut order: Vec<usize> = (0..cases.len()).collect();
    let mut pos = order.len();
    for it in 1..=cfg.updates_per_timestep {
        if pos == order.len() {
            rng.shuffle(&mut order);
            pos = 0;
        }
        let c = &cases[order[pos]];
        pos += 1;
        let mut s = layer.preactivation(&c.input, &c.prev)?;
        logistic_in_place(&mut s);
        let mut r = decoder.apply(&s)?;
        for (v, x) in r.iter_mut().zip(data[c.seq].x(t)) {
            *v -= x;
        }
        let ds = decoder.weights.mul_vec(&r)?;
        let dz: Vec<f64> = ds.iter().zip(&s).map(|(d, s)| 2.0 * d * s * (1.0 - s)).collect();
        decoder.weights.add_outer(-2.0 * lr, &s, &r);
        crate::numerics::axpy(-2.0 * lr, &r, &mut decoder.bias);
        layer.input.add_outer(-lr, &c.input, &dz);
        layer.state.add_outer(-lr, &c.prev, &dz);
        crate::numerics::axpy(-lr, &dz, &mut layer.bias);
        if !r.iter().all(|v| v.is_finite()) || !layer.is_finite() || !decoder.is_finite() {
            return Err(Error::non_finite(name));
        }
        if it % cfg.record_every == 0 || it == cfg.updates_per_timestep {
            record(layer, decoder, it, report)?;
        }
    }
    Ok(())
}

fn mean<T: Clone>(sum: &T, n: usize, scale: impl Fn(&mut T, f64)) -> T {
    let mut m = sum.clone();
    scale(&mut m, 1.0 / n as f64);
    m
}

/// Stage one: fit `A` with `C_2`, then each `B_t, C_t` in turn through the
/// frozen earlier chain, starting every timestep from the average of the
/// ones before it. `B_2` keeps its random draw and only seeds that average.
pub fn train_initialization(data: &[Sequence], cfg: &TrainConfig) -> Result<(PerTimestepParams, TrainReport)> {
    cfg.validate()?;
    let d = common_obs_dim(data)?;
    let seq_len = data.iter().map(Sequence::len).max().unwrap_or(0);
    if seq_len < 2 {
        return Err(Error::InvalidArgument(
            "training needs at least one sequence with 2 or more observations".into(),
        ));
    }
    let dims = ModelDims::new(d, cfg.state_dim, seq_len, cfg.window)?;
    let (p, h) = (dims.input_dim(), dims.state_dim);
    let root = Rng::new(cfg.seed);
    let mut param_rng = root.substream("init-params");
    let mut order_rng = root.substream("initialization-order");
    let mut report = TrainReport::default();

    let init = Affine::random(p, h, cfg.init_stddev, &mut param_rng);
    let first_update = Recurrent::random(p, h, cfg.init_stddev, &mut param_rng);
    let mut first_decoder = Affine::random(h, d, cfg.init_stddev, &mut param_rng);

    // A is trained as an update layer with an empty previous state.
    let mut layer = Recurrent {
        input: init.weights,
        state: Matrix::zeros(0, h),
        bias: init.bias,
    };
    let mut cases: Vec<Case> = data
        .iter()
        .enumerate()
        .filter(|(_, s)| s.len() >= 2)
        .map(|(i, s)| {
            Ok(Case {
                input: AugmentedInput::build(s, 1, dims.window, seq_len)?.values().to_vec(),
                prev: Vec::new(),
                seq: i,
            })
        })
        .collect::<Result<_>>()?;
    train_stage(&mut layer, &mut first_decoder, &cases, data, 2, cfg, &mut order_rng, &mut report)?;
    let init = Affine {
        weights: layer.input.clone(),
        bias: layer.bias.clone(),
    };
    let mut states = next_states(&layer, &cases)?;

    let mut update_sum = first_update.clone();
    let mut decoder_sum = first_decoder.clone();
    let mut updates = vec![first_update];
    let mut decoders = vec![first_decoder];
    for t in 3..=seq_len {
        let n_prev = updates.len();
        let mut b = mean(&update_sum, n_prev, Recurrent::scale);
        let mut c = mean(&decoder_sum, n_prev, Affine::scale);
        cases = cases
            .iter()
            .zip(states)
            .filter(|(case, _)| data[case.seq].len() >= t)
            .map(|(case, s)| {
                Ok(Case {
                    input: AugmentedInput::build(&data[case.seq], t - 1, dims.window, seq_len)?
                        .values()
                        .to_vec(),
                    prev: s,
                    seq: case.seq,
                })
            })
            .collect::<Result<_>>()?;
        train_stage(&mut b, &mut c, &cases, data, t, cfg, &mut order_rng, &mut report)?;
        states = next_states(&b, &cases)?;
        update_sum.axpy(1.0, &b);
        decoder_sum.axpy(1.0, &c);
        updates.push(b);
        decoders.push(c);
    }
    let per = PerTimestepParams::new(dims, init, updates, decoders)?;
    Ok((per, report))
}

fn next_states(layer: &Recurrent, cases: &[Case]) -> Result<Vec<Vec<f64>>> {
    cases
        .iter()
        .map(|c| {
            let mut s = layer.preactivation(&c.input, &c.prev)?;
            logistic_in_place(&mut s);
            Ok(s)
        })
        .collect()
}

/// Shared `B`, `C` as the uniform mean over timesteps; `A` copied;
/// projections reset to the identity.
pub fn collapse_to_shared(per_t: &PerTimestepParams) -> Result<SprParams> {
    let n = per_t.updates.len();
    let mut b = per_t.updates[0].clone();
    let mut c = per_t.decoders[0].clone();
    for (u, dec) in per_t.updates.iter().zip(&per_t.decoders).skip(1) {
        b.axpy(1.0, u);
        c.axpy(1.0, dec);
    }
    b.scale(1.0 / n as f64);
    c.scale(1.0 / n as f64);
    let h = per_t.dims.state_dim;
    SprParams::from_parts(
        per_t.dims,
        per_t.init.clone(),
        b,
        c,
        (0..per_t.dims.projection_count()).map(|_| Affine::identity(h)).collect(),
    )
}
