use super::config::{ProjectionTarget, TrainConfig};
use super::report::TrainReport;
use crate::datasets::Sequence;
use crate::error::{Error, Result};
use crate::numerics::{pullback_rows, ridge_with_intercept, squared_distance, Matrix};
use crate::spr::{apply_c, apply_d, filter_all, Affine, SprParams, State};

/// Fits every projection `D_j` in closed form against the frozen filter.
/// Pairs are `(s_u, ·_{u+2^j})` for `2 ≤ u ≤ T − 2^j`; exponents without
/// pairs keep their current operator and are listed in the report.
pub fn train_projections(params: &SprParams, data: &[Sequence], cfg: &TrainConfig) -> Result<(SprParams, TrainReport)> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("projection training needs data".into()));
    }
    let h = params.state_dim();
    let filtered = data
        .iter()
        .map(|s| filter_all(params, s))
        .collect::<Result<Vec<_>>>()?;
    let mut out = params.clone();
    let mut report = TrainReport::default();
    for j in 0..params.projections.len() as u32 {
        let gap = 1usize << j;
        let mut feats = Vec::new();
        let mut targets = Vec::new();
        let mut observed = Vec::new();
        let mut n = 0;
        for (seq, states) in data.iter().zip(&filtered) {
            // states[i] is s_{i+2}
            for u in 2..=seq.len().saturating_sub(gap) {
                feats.extend_from_slice(&states[u - 2].values);
                if cfg.projection_target == ProjectionTarget::FilteredState {
                    targets.extend_from_slice(&states[u + gap - 2].values);
                }
                observed.extend_from_slice(seq.x(u + gap));
                n += 1;
            }
        }
        if n == 0 {
            report.skipped_projections.push(j);
            continue;
        }
        let features = Matrix::from_vec(n, h, feats)?;
        let observed = Matrix::from_vec(n, params.obs_dim(), observed)?;
        let targets = match cfg.projection_target {
            ProjectionTarget::FilteredState => Matrix::from_vec(n, h, targets)?,
            ProjectionTarget::PulledBackObservation => {
                let mut shifted = observed.clone();
                for i in 0..n {
                    for (v, a) in shifted.row_mut(i).iter_mut().zip(&params.decode.bias) {
                        *v -= a;
                    }
                }
                pullback_rows(&params.decode.weights, &shifted)?
            }
        };
        let (weights, bias) = ridge_with_intercept(&features, &targets, cfg.ridge_lambda_d)?;
        out.projections[j as usize] = Affine { weights, bias };
        if !out.projections[j as usize].is_finite() {
            return Err(Error::non_finite(format!("projection/j={j}")));
        }
        let mut loss = 0.0;
        for i in 0..n {
            let s = State {
                values: features.row(i).to_vec(),
                time: 0,
            };
            let pred = apply_c(&out, &apply_d(&out, j, &s)?)?;
            loss += squared_distance(&pred, observed.row(i));
        }
        report.push(format!("projection/j={j}"), 0, loss / (n * params.obs_dim()) as f64);
    }
    Ok((out, report))
}
