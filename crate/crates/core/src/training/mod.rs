//! Three-stage learning: per-timestep initialization, conditional training
//! by backpropagation through time with stochastic mixing, and closed-form
//! projection fitting.

mod config;
mod gradient;
mod initialization;
mod mixing;
mod projections;
mod report;

pub use config::{AnnealSchedule, ProjectionTarget, TrainConfig};
pub use gradient::{bptt_gradient, filter_blocks_mut, gradient_blocks, sequence_loss, SprGradient};
pub use initialization::{collapse_to_shared, train_initialization, PerTimestepParams};
pub use mixing::{conditional_training_step, mix_accepts, stochastic_mix};
pub use projections::train_projections;
pub use report::{LossRecord, TrainReport};

use std::time::Instant;

use crate::datasets::Sequence;
use crate::error::{Error, Result};
use crate::numerics::Rng;
use crate::spr::{one_step_loss, SprParams};

/// Conditional training with stochastic mixing from an already shared model.
pub fn mix(params: SprParams, data: &[Sequence], cfg: &TrainConfig) -> Result<(SprParams, TrainReport)> {
    let root = Rng::new(cfg.seed);
    let mut sample_rng = root.substream("mixing-sample");
    let mut coin_rng = root.substream("mixing-coin");
    let mut report = TrainReport::default();
    let total = cfg.mixing_iterations;
    let mut params = params;
    let record = |params: &SprParams, it: usize, report: &mut TrainReport| -> Result<()> {
        let loss = one_step_loss(params, data)?;
        if !loss.is_finite() {
            return Err(Error::non_finite("mixing"));
        }
        report.push("mixing", it, loss);
        Ok(())
    };
    if total > 0 {
        record(&params, 0, &mut report)?;
    }
    for i in 0..total {
        let alpha = cfg.anneal.alpha(cfg.alpha0, i, total);
        let candidate = conditional_training_step(&params, data, cfg, &mut sample_rng)?;
        params = stochastic_mix(&params, &candidate, alpha, &mut coin_rng);
        let it = i + 1;
        if it % cfg.record_every == 0 || it == total {
            record(&params, it, &mut report)?;
        }
    }
    Ok((params, report))
}

/// Initialization, collapse to shared operators, mixing, then projections.
pub fn train_full(data: &[Sequence], cfg: &TrainConfig) -> Result<(SprParams, TrainReport)> {
    let start = Instant::now();
    let (per_t, mut report) = train_initialization(data, cfg)?;
    let shared = collapse_to_shared(&per_t)?;
    let (mixed, mix_report) = mix(shared, data, cfg)?;
    report.extend(mix_report);
    let (params, proj_report) = train_projections(&mixed, data, cfg)?;
    report.extend(proj_report);
    report.wall_clock_seconds = start.elapsed().as_secs_f64();
    Ok((params, report))
}

/// [`train_full`] plus the one-step loss on a held-out split.
pub fn train_with_validation(
    train: &[Sequence],
    validation: &[Sequence],
    cfg: &TrainConfig,
) -> Result<(SprParams, TrainReport)> {
    let (params, mut report) = train_full(train, cfg)?;
    if !validation.is_empty() {
        report.final_validation_loss = Some(one_step_loss(&params, validation)?);
    }
    Ok((params, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::generate_example42;

    fn small_cfg(seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: 0.05,
            updates_per_timestep: 60,
            mixing_iterations: 40,
            record_every: 10,
            ..TrainConfig::new(3, seed)
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let data = generate_example42(20, 10, 1).unwrap().sequences;
        let (a, ra) = train_full(&data, &small_cfg(3)).unwrap();
        let (b, rb) = train_full(&data, &small_cfg(3)).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_eq!(ra.to_csv(), rb.to_csv());
        let (c, _) = train_full(&data, &small_cfg(4)).unwrap();
        assert_ne!(a.to_bytes(), c.to_bytes());
    }

    #[test]
    fn zero_mixing_is_collapse_then_projections() {
        let data = generate_example42(20, 10, 2).unwrap().sequences;
        let cfg = TrainConfig {
            mixing_iterations: 0,
            ..small_cfg(5)
        };
        let (full, report) = train_full(&data, &cfg).unwrap();
        let (per_t, _) = train_initialization(&data, &cfg).unwrap();
        let (direct, _) = train_projections(&collapse_to_shared(&per_t).unwrap(), &data, &cfg).unwrap();
        assert_eq!(full, direct);
        assert_eq!(report.stage("mixing").count(), 0);
    }

    #[test]
    fn beats_average_predictor_on_example42() {
        let data = generate_example42(60, 12, 3).unwrap().sequences;
        let (params, _) = train_full(&data, &small_cfg(1)).unwrap();
        let n: usize = data.iter().map(|s| s.len() - 1).sum();
        let mean = data.iter().flat_map(|s| (2..=s.len()).map(move |t| s.x(t)[0])).sum::<f64>() / n as f64;
        let var = data
            .iter()
            .flat_map(|s| (2..=s.len()).map(move |t| s.x(t)[0]))
            .map(|v| (v - mean).powi(2))
            .sum::<f64>()
            / n as f64;
        let loss = one_step_loss(&params, &data).unwrap();
        assert!(loss < var, "{loss} !< {var}");
    }
}
