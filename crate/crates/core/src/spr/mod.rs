//! Learned state-space operators: state initialization, state update,
//! observation decoding and power-of-two state projections.

mod forward;
mod params;

pub use forward::{
    apply_a, apply_b, apply_c, apply_d, decompose_gap, filter, filter_all, predict_from_state,
    predict_horizon, project, AugmentedInput, State, PROJECTION_CLAMP,
};
pub use params::{Affine, ModelDims, Recurrent, SprParams, DEFAULT_INIT_STDDEV, MODEL_MAGIC};

use crate::datasets::Sequence;
use crate::error::Result;
use crate::numerics::squared_distance;

/// Mean one-step squared error per scalar entry, `Σ‖C(s_t) − x_t‖² / (n·d)`
/// over every `t ≥ 2` of every sequence.
pub fn one_step_loss(params: &SprParams, seqs: &[Sequence]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for seq in seqs {
        let states = filter_all(params, seq)?;
        for (i, s) in states.iter().take(seq.len() - 1).enumerate() {
            let pred = apply_c(params, s)?;
            total += squared_distance(&pred, seq.x(i + 2));
            count += 1;
        }
    }
    if count == 0 {
        return Ok(0.0);
    }
    Ok(total / (count * params.obs_dim()) as f64)
}
