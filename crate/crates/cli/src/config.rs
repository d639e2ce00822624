//! Run configuration, read from TOML.
//!
//! ```toml
//! seed = 7
//! output_dir = "runs/cts"
//!
//! [dataset]
//! kind = "nonlinear_cts"
//!
//! [train]
//! state_dim = 20
//! learning_rate = 0.01
//!
//! [baselines]
//! linear_orders = [2, 5]
//! hmm_states = [20]
//!
//! [evaluate]
//! horizons = [1, 2, 4, 8, 10, 16, 25]
//! ```
//!
//! Unknown keys are rejected. Relative paths are resolved against the
//! directory holding the config file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sprdm_core::baselines::{DEFAULT_LAMBDA_GRID, DEFAULT_VARIANCE_FLOOR};
use sprdm_core::datasets::SplitRatios;
use sprdm_core::evaluation::{DEFAULT_MIN_PREFIX, STANDARD_HORIZONS};
use sprdm_core::training::{AnnealSchedule, ProjectionTarget, TrainConfig};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Required unless supplied on the command line.
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub baselines: BaselineSection,
    #[serde(default)]
    pub evaluate: EvaluateSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Example41,
    Example42,
    NonlinearCts,
    /// Sequences read from a file in the plain-text sequence format.
    Files,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    pub n_sequences: Option<usize>,
    pub length: Option<usize>,
    pub obs_dim: Option<usize>,
    pub path: Option<PathBuf>,
    /// Relative sizes of the train, validation and test splits.
    pub split: Option<[f64; 3]>,
    pub normalize: Option<bool>,
    pub process_noise: Option<f64>,
    pub obs_noise: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnealKind {
    Linear,
    Constant,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    FilteredState,
    PulledBackObservation,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub state_dim: usize,
    pub learning_rate: f64,
    pub updates_per_timestep: usize,
    pub mixing_iterations: usize,
    pub mixing_learning_rate: Option<f64>,
    pub alpha0: f64,
    pub anneal: AnnealKind,
    pub anneal_rate: f64,
    pub window: usize,
    pub ridge_lambda: f64,
    pub projection_target: TargetKind,
    pub clip_norm: f64,
    pub init_stddev: f64,
    pub record_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let base = TrainConfig::new(20, 0);
        TrainSection {
            state_dim: base.state_dim,
            learning_rate: base.learning_rate,
            updates_per_timestep: base.updates_per_timestep,
            mixing_iterations: base.mixing_iterations,
            mixing_learning_rate: base.mixing_learning_rate,
            alpha0: base.alpha0,
            anneal: AnnealKind::Linear,
            anneal_rate: 0.99,
            window: base.window,
            ridge_lambda: base.ridge_lambda_d,
            projection_target: TargetKind::FilteredState,
            clip_norm: base.clip_norm,
            init_stddev: base.init_stddev,
            record_every: base.record_every,
        }
    }
}

impl TrainSection {
    pub fn to_train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            updates_per_timestep: self.updates_per_timestep,
            mixing_iterations: self.mixing_iterations,
            mixing_learning_rate: self.mixing_learning_rate,
            alpha0: self.alpha0,
            anneal: match self.anneal {
                AnnealKind::Linear => AnnealSchedule::Linear,
                AnnealKind::Constant => AnnealSchedule::Constant,
                AnnealKind::Exponential => AnnealSchedule::Exponential {
                    rate: self.anneal_rate,
                },
            },
            window: self.window,
            state_dim: self.state_dim,
            ridge_lambda_d: self.ridge_lambda,
            projection_target: match self.projection_target {
                TargetKind::FilteredState => ProjectionTarget::FilteredState,
                TargetKind::PulledBackObservation => ProjectionTarget::PulledBackObservation,
            },
            clip_norm: self.clip_norm,
            init_stddev: self.init_stddev,
            record_every: self.record_every,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineSection {
    /// One LINEAR-k model per entry.
    pub linear_orders: Vec<usize>,
    pub lambda_grid: Vec<f64>,
    /// One Gaussian HMM per entry.
    pub hmm_states: Vec<usize>,
    pub hmm_iterations: usize,
    pub hmm_restarts: usize,
    pub variance_floor: f64,
}

impl Default for BaselineSection {
    fn default() -> Self {
        BaselineSection {
            linear_orders: vec![2, 5],
            lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
            hmm_states: vec![20],
            hmm_iterations: 50,
            hmm_restarts: 1,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateSection {
    pub horizons: Vec<usize>,
    pub min_prefix: usize,
    /// Models to score; defaults to every trained model plus `average`.
    pub models: Option<Vec<String>>,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection {
            horizons: STANDARD_HORIZONS.to_vec(),
            min_prefix: DEFAULT_MIN_PREFIX,
            models: None,
        }
    }
}

/// Dataset settings with every default filled in, as recorded in the
/// manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedDataset {
    pub kind: DatasetKind,
    pub n_sequences: usize,
    pub length: usize,
    pub obs_dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub split: [f64; 3],
    pub normalize: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub process_noise: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub obs_noise: Option<f64>,
}

impl ResolvedDataset {
    pub fn ratios(&self) -> SplitRatios {
        SplitRatios {
            train: self.split[0],
            validation: self.split[1],
            test: self.split[2],
        }
    }
}

/// A model name from the roster: `spr`, `linear-K`, `hmm-N` or `average`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelName {
    Spr,
    Linear(usize),
    Hmm(usize),
    Average,
}

impl ModelName {
    pub fn parse(name: &str) -> Option<ModelName> {
        let count = |s: &str| s.parse::<usize>().ok().filter(|&n| n > 0);
        match name {
            "spr" => Some(ModelName::Spr),
            "average" => Some(ModelName::Average),
            _ => {
                if let Some(k) = name.strip_prefix("linear-") {
                    count(k).map(ModelName::Linear)
                } else if let Some(n) = name.strip_prefix("hmm-") {
                    count(n).map(ModelName::Hmm)
                } else {
                    None
                }
            }
        }
    }

    /// File the model is stored in; `None` for the average predictor.
    pub fn file_name(&self) -> Option<String> {
        match self {
            ModelName::Average => None,
            other => Some(format!("{other}.model")),
        }
    }
}

impl std::fmt::Display for ModelName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelName::Spr => write!(f, "spr"),
            ModelName::Linear(k) => write!(f, "linear-{k}"),
            ModelName::Hmm(n) => write!(f, "hmm-{n}"),
            ModelName::Average => write!(f, "average"),
        }
    }
}

fn invalid(key: &str, message: impl std::fmt::Display) -> CliError {
    CliError::InvalidConfig(format!("`{key}` {message}"))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::InvalidConfig(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file, resolving relative paths against
    /// its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.output_dir.as_mut().map(resolve);
        cfg.dataset.path.as_mut().map(resolve);
        Ok(cfg)
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::InvalidConfig("missing key `seed` (set it in the config or pass --seed)".into()))
    }

    pub fn output_dir(&self) -> Result<&Path, CliError> {
        self.output_dir
            .as_deref()
            .ok_or_else(|| CliError::InvalidConfig("missing key `output_dir` (set it in the config or pass --out)".into()))
    }

    pub fn resolved_dataset(&self) -> ResolvedDataset {
        let d = &self.dataset;
        let (n, len, dim, split, norm) = match d.kind {
            DatasetKind::Example41 => (100, 3, 1, [0.8, 0.1, 0.1], false),
            DatasetKind::Example42 => (200, 30, 1, [0.8, 0.1, 0.1], false),
            DatasetKind::NonlinearCts => (38, 50, 58, [25.0, 5.0, 8.0], true),
            DatasetKind::Files => (0, 0, 0, [25.0, 5.0, 8.0], true),
        };
        let cts = d.kind == DatasetKind::NonlinearCts;
        ResolvedDataset {
            kind: d.kind,
            n_sequences: d.n_sequences.unwrap_or(n),
            length: d.length.unwrap_or(len),
            obs_dim: d.obs_dim.unwrap_or(dim),
            path: d.path.clone(),
            split: d.split.unwrap_or(split),
            normalize: d.normalize.unwrap_or(norm),
            process_noise: d.process_noise.or(cts.then_some(0.01)),
            obs_noise: d.obs_noise.or(cts.then_some(0.05)),
        }
    }

    /// Models that `train` produces, in roster order.
    pub fn trained_models(&self) -> Vec<ModelName> {
        let mut out = vec![ModelName::Spr];
        out.extend(self.baselines.linear_orders.iter().map(|&k| ModelName::Linear(k)));
        out.extend(self.baselines.hmm_states.iter().map(|&n| ModelName::Hmm(n)));
        out
    }

    pub fn evaluated_models(&self) -> Vec<ModelName> {
        match &self.evaluate.models {
            Some(names) => names.iter().filter_map(|n| ModelName::parse(n)).collect(),
            None => {
                let mut all = self.trained_models();
                all.push(ModelName::Average);
                all
            }
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        let d = &self.dataset;
        match d.kind {
            DatasetKind::Files => {
                if d.path.is_none() {
                    return Err(invalid("dataset.path", "is required when kind = \"files\""));
                }
                for (key, set) in [
                    ("dataset.n_sequences", d.n_sequences.is_some()),
                    ("dataset.length", d.length.is_some()),
                    ("dataset.obs_dim", d.obs_dim.is_some()),
                ] {
                    if set {
                        return Err(invalid(key, "is taken from the file when kind = \"files\""));
                    }
                }
            }
            kind => {
                if d.path.is_some() {
                    return Err(invalid("dataset.path", "only applies when kind = \"files\""));
                }
                if kind != DatasetKind::NonlinearCts {
                    for (key, set) in [
                        ("dataset.obs_dim", d.obs_dim.is_some()),
                        ("dataset.process_noise", d.process_noise.is_some()),
                        ("dataset.obs_noise", d.obs_noise.is_some()),
                    ] {
                        if set {
                            return Err(invalid(key, "only applies when kind = \"nonlinear_cts\""));
                        }
                    }
                }
                if kind == DatasetKind::Example41 && d.length.is_some_and(|l| l != 3) {
                    return Err(invalid("dataset.length", "is fixed at 3 for example41"));
                }
            }
        }
        for (key, v) in [
            ("dataset.n_sequences", d.n_sequences),
            ("dataset.length", d.length),
            ("dataset.obs_dim", d.obs_dim),
        ] {
            if v == Some(0) {
                return Err(invalid(key, "must be at least 1"));
            }
        }
        if let Some(split) = d.split {
            if split.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) || split.iter().sum::<f64>() <= 0.0 {
                return Err(invalid("dataset.split", "must hold three nonnegative weights with a positive sum"));
            }
        }
        for (key, v) in [("dataset.process_noise", d.process_noise), ("dataset.obs_noise", d.obs_noise)] {
            if v.is_some_and(|v| !(v >= 0.0) || !v.is_finite()) {
                return Err(invalid(key, "must be nonnegative"));
            }
        }

        let t = &self.train;
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(key, format!("must be positive, got {v}")))
            }
        };
        positive("train.learning_rate", t.learning_rate)?;
        positive("train.clip_norm", t.clip_norm)?;
        if let Some(r) = t.mixing_learning_rate {
            if !(r >= 0.0) || !r.is_finite() {
                return Err(invalid("train.mixing_learning_rate", format!("must be nonnegative, got {r}")));
            }
        }
        for (key, v) in [("train.alpha0", t.alpha0), ("train.anneal_rate", t.anneal_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(key, format!("must lie in [0, 1], got {v}")));
            }
        }
        for (key, v) in [
            ("train.state_dim", t.state_dim),
            ("train.window", t.window),
            ("train.record_every", t.record_every),
        ] {
            if v == 0 {
                return Err(invalid(key, "must be at least 1"));
            }
        }
        for (key, v) in [("train.ridge_lambda", t.ridge_lambda), ("train.init_stddev", t.init_stddev)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid(key, format!("must be nonnegative, got {v}")));
            }
        }

        let b = &self.baselines;
        if b.linear_orders.contains(&0) {
            return Err(invalid("baselines.linear_orders", "entries must be at least 1"));
        }
        if b.hmm_states.contains(&0) {
            return Err(invalid("baselines.hmm_states", "entries must be at least 1"));
        }
        if b.lambda_grid.is_empty() || b.lambda_grid.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return Err(invalid("baselines.lambda_grid", "must be a nonempty list of nonnegative values"));
        }
        if b.hmm_restarts == 0 {
            return Err(invalid("baselines.hmm_restarts", "must be at least 1"));
        }
        if !(b.variance_floor > 0.0) || !b.variance_floor.is_finite() {
            return Err(invalid("baselines.variance_floor", "must be positive"));
        }

        let e = &self.evaluate;
        if e.horizons.is_empty() {
            return Err(invalid("evaluate.horizons", "must not be empty"));
        }
        if e.horizons.contains(&0) {
            return Err(invalid("evaluate.horizons", "entries must be at least 1"));
        }
        if e.min_prefix == 0 {
            return Err(invalid("evaluate.min_prefix", "must be at least 1"));
        }
        if let Some(models) = &e.models {
            if models.is_empty() {
                return Err(invalid("evaluate.models", "must not be empty"));
            }
            let trained = self.trained_models();
            for name in models {
                match ModelName::parse(name) {
                    None => {
                        return Err(invalid(
                            "evaluate.models",
                            format!("has unknown model `{name}`; expected spr, linear-K, hmm-N or average"),
                        ))
                    }
                    Some(m) if m != ModelName::Average && !trained.contains(&m) => {
                        return Err(invalid("evaluate.models", format!("names `{name}`, which the [baselines] section does not train")))
                    }
                    Some(_) => {}
                }
            }
        }
        Ok(())
    }
}
