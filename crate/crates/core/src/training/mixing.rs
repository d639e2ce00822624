use super::config::TrainConfig;
use super::gradient::{bptt_gradient, clip_update};
use crate::datasets::Sequence;
use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::spr::{Recurrent, SprParams};

/// One backprop-through-time step on the update operator for a sequence
/// drawn from `rng`; `A` and `C` stay frozen. Returns the candidate
/// `B' = B − η·clip(∇_B)`.
pub fn conditional_training_step(
    params: &SprParams,
    data: &[Sequence],
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<Recurrent> {
    let eligible: Vec<&Sequence> = data.iter().filter(|s| s.len() >= 2).collect();
    if eligible.is_empty() {
        return Err(Error::InvalidArgument(
            "conditional training needs a sequence with 2 or more observations".into(),
        ));
    }
    let seq = eligible[rng.below(eligible.len())];
    let (_, grad) = bptt_gradient(params, seq)?;
    let mut step = grad.update;
    clip_update(&mut step, cfg.clip_norm);
    let mut candidate = params.update.clone();
    candidate.axpy(-cfg.mixing_rate(), &step);
    if !candidate.is_finite() {
        return Err(Error::non_finite("conditional training"));
    }
    Ok(candidate)
}

/// Draws the mixing coin: true with probability `alpha`.
pub fn mix_accepts(alpha: f64, rng: &mut Rng) -> bool {
    rng.uniform() < alpha
}

/// Installs `candidate` as the update operator with probability `alpha`;
/// every other block is left untouched.
pub fn stochastic_mix(params: &SprParams, candidate: &Recurrent, alpha: f64, rng: &mut Rng) -> SprParams {
    let mut out = params.clone();
    if mix_accepts(alpha, rng) {
        out.update = candidate.clone();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spr::ModelDims;
    use crate::training::sequence_loss;

    fn setup() -> (SprParams, Vec<Sequence>) {
        let mut rng = Rng::new(4);
        let dims = ModelDims::new(1, 2, 6, 1).unwrap();
        let params = SprParams::init(dims, &mut rng, 0.5);
        let seq = Sequence::from_scalars("s", &[0.1, 0.4, 0.2, 0.5, 0.3, 0.6]).unwrap();
        (params, vec![seq])
    }

    #[test]
    fn mixing_extremes() {
        let (params, _) = setup();
        let mut cand = params.update.clone();
        cand.scale(3.0);
        let mut rng = Rng::new(1);
        for _ in 0..100 {
            assert_eq!(stochastic_mix(&params, &cand, 0.0, &mut rng), params);
            let mixed = stochastic_mix(&params, &cand, 1.0, &mut rng);
            assert_eq!(mixed.update, cand);
            assert_eq!((&mixed.init, &mixed.decode), (&params.init, &params.decode));
        }
    }

    #[test]
    fn acceptance_frequency() {
        let mut rng = Rng::new(9);
        let hits = (0..10_000).filter(|_| mix_accepts(0.9, &mut rng)).count();
        assert!((8800..=9200).contains(&hits), "{hits}");
    }

    #[test]
    fn zero_rate_keeps_update() {
        let (params, data) = setup();
        let cfg = TrainConfig {
            mixing_learning_rate: Some(0.0),
            ..TrainConfig::new(2, 0)
        };
        let cand = conditional_training_step(&params, &data, &cfg, &mut Rng::new(0)).unwrap();
        assert_eq!(cand, params.update);
    }

    #[test]
    fn one_step_reduces_loss() {
        let (params, data) = setup();
        let cfg = TrainConfig {
            learning_rate: 0.05,
            ..TrainConfig::new(2, 0)
        };
        let before = sequence_loss(&params, &data[0]).unwrap();
        let mut after_params = params.clone();
        after_params.update = conditional_training_step(&params, &data, &cfg, &mut Rng::new(0)).unwrap();
        let after = sequence_loss(&after_params, &data[0]).unwrap();
        assert!(after < before, "{after} !< {before}");
    }
}
