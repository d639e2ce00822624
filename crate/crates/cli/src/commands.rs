//! The four pipeline steps. Every command reads and writes the flat run
//! directory:
//!
//! | file | written by |
//! |------|------------|
//! | `train.seq`, `validation.seq`, `test.seq`, `manifest.json` | `generate` |
//! | `<model>.model`, `train_report.csv` | `train` |
//! | `report_<model>.csv`, `comparison.csv` | `evaluate` |

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sprdm_core::baselines::{
    fit_linear_ar_selected, hmm_em_fit, hmm_predict, AveragePredictor, EmConfig, GaussianHmm, LinearArModel,
    HMM_MAGIC, LINEAR_MAGIC,
};
use sprdm_core::datasets::{
    format_value, generate_example41, generate_example42, generate_nonlinear_cts, load_sequences, normalize,
    parse_sequences, sequences_to_text, split, NonlinearSpec, Sequence,
};
use sprdm_core::evaluation::{compare, evaluate, ComparisonTable, Forecaster, HorizonReport};
use sprdm_core::numerics::Rng;
use sprdm_core::spr::{predict_horizon, SprParams, MODEL_MAGIC};
use sprdm_core::training::train_with_validation;
use sprdm_core::FORMAT_VERSION;

use crate::config::{DatasetKind, ModelName, ResolvedDataset, RunConfig};
use crate::error::{CliError, Context};

pub const SPLITS: [&str; 3] = ["train", "validation", "test"];
pub const MANIFEST: &str = "manifest.json";
pub const TRAIN_REPORT: &str = "train_report.csv";
pub const COMPARISON: &str = "comparison.csv";

pub fn split_file(split: &str) -> String {
    format!("{split}.seq")
}

pub fn report_file(model: &ModelName) -> String {
    format!("report_{model}.csv")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationEntry {
    pub means: Vec<f64>,
    pub scale: f64,
}

/// Contents of `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub seed: u64,
    pub dataset: serde_json::Value,
    /// SHA-256 of each written file, hex encoded.
    pub files: BTreeMap<String, String>,
    pub counts: BTreeMap<String, usize>,
    pub normalization: NormalizationEntry,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn raw_sequences(ds: &ResolvedDataset, seed: u64) -> Result<Vec<Sequence>, CliError> {
    match ds.kind {
        DatasetKind::Example41 => Ok(generate_example41(ds.n_sequences, seed)),
        DatasetKind::Example42 => Ok(generate_example42(ds.n_sequences, ds.length, seed)
            .context(|| "generating example42".into())?
            .sequences),
        DatasetKind::NonlinearCts => {
            let mut spec = NonlinearSpec::new(ds.n_sequences, ds.length, ds.obs_dim, seed);
            spec.process_noise = ds.process_noise.unwrap_or(spec.process_noise);
            spec.obs_noise = ds.obs_noise.unwrap_or(spec.obs_noise);
            Ok(generate_nonlinear_cts(&spec).context(|| "generating nonlinear_cts".into())?.sequences)
        }
        DatasetKind::Files => {
            let path = ds.path.as_ref().expect("validated");
            load_sequences(path).context(|| format!("reading {}", path.display()))
        }
    }
}

/// Builds the dataset, splits it, optionally normalizes it and writes the
/// three split files plus the manifest.
pub fn generate(cfg: &RunConfig) -> Result<Manifest, CliError> {
    let seed = cfg.seed()?;
    let out = cfg.output_dir()?;
    let ds = cfg.resolved_dataset();
    let seqs = raw_sequences(&ds, seed)?;
    eprintln!("generate: {} sequences of kind {:?}", seqs.len(), ds.kind);
    let mut bundle = split(seqs, ds.ratios(), seed).context(|| "splitting".into())?;
    if ds.normalize {
        bundle = normalize(&bundle).context(|| "normalizing".into())?;
    }
    create_dir(out)?;
    let mut files = BTreeMap::new();
    let mut counts = BTreeMap::new();
    for (name, seqs) in SPLITS.iter().zip([&bundle.train, &bundle.validation, &bundle.test]) {
        let file = split_file(name);
        let text = sequences_to_text(seqs).context(|| format!("encoding {file}"))?;
        write(&out.join(&file), &text)?;
        files.insert(file, sha256_hex(text.as_bytes()));
        counts.insert(name.to_string(), seqs.len());
    }
    let mut dataset = serde_json::to_value(&ds).expect("plain data");
    if let Some(p) = &ds.path {
        dataset["path"] = serde_json::Value::String(p.display().to_string());
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        seed,
        dataset,
        files,
        counts,
        normalization: NormalizationEntry {
            means: bundle.normalization.means.clone(),
            scale: bundle.normalization.scale,
        },
    };
    let mut json = serde_json::to_string_pretty(&manifest).expect("plain data");
    json.push('\n');
    write(&out.join(MANIFEST), json)?;
    eprintln!(
        "generate: wrote {} train / {} validation / {} test sequences to {}",
        bundle.train.len(),
        bundle.validation.len(),
        bundle.test.len(),
        out.display()
    );
    Ok(manifest)
}

/// Loads one split and checks its hash against the manifest when one is
/// present.
pub fn load_split(dir: &Path, name: &str) -> Result<Vec<Sequence>, CliError> {
    let file = split_file(name);
    let path = dir.join(&file);
    let bytes = read(&path)?;
    let text = String::from_utf8(bytes).map_err(|_| CliError::Core {
        context: format!("reading {}", path.display()),
        source: sprdm_core::Error::Parse {
            line: 1,
            column: 1,
            message: "file is not valid UTF-8".into(),
        },
    })?;
    let seqs = parse_sequences(&text).context(|| format!("reading {}", path.display()))?;
    let manifest_path = dir.join(MANIFEST);
    if manifest_path.exists() {
        let manifest: Manifest = serde_json::from_slice(&read(&manifest_path)?)
            .map_err(|e| CliError::Manifest(format!("{}: {e}", manifest_path.display())))?;
        match manifest.files.get(&file) {
            Some(h) if *h == sha256_hex(text.as_bytes()) => {}
            Some(_) => return Err(CliError::Manifest(format!("{} does not match its recorded hash", path.display()))),
            None => return Err(CliError::Manifest(format!("{file} is not listed in the manifest"))),
        }
    }
    Ok(seqs)
}

/// Trains SPR and every configured baseline on the training split.
pub fn train(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let seed = cfg.seed()?;
    let dir = cfg.output_dir()?;
    let train = load_split(dir, "train")?;
    let validation = load_split(dir, "validation")?;
    if train.is_empty() {
        return Err(CliError::Core {
            context: "training".into(),
            source: sprdm_core::Error::TooFewSequences("the training split is empty".into()),
        });
    }
    let mut written = Vec::new();

    let tc = cfg.train.to_train_config(seed);
    eprintln!(
        "train spr: {} sequences, h = {}, {} updates per timestep, {} mixing iterations",
        train.len(),
        tc.state_dim,
        tc.updates_per_timestep,
        tc.mixing_iterations
    );
    let (spr, report) = train_with_validation(&train, &validation, &tc).context(|| "train spr".into())?;
    for name in &report.skipped_projections {
        eprintln!("train spr: skipped {name}");
    }
    if let Some(v) = report.final_validation_loss {
        eprintln!("train spr: validation one-step loss {}", format_value(v));
    }
    let path = dir.join(ModelName::Spr.file_name().expect("stored"));
    write(&path, spr.to_bytes())?;
    written.push(path);
    let path = dir.join(TRAIN_REPORT);
    write(&path, report.to_csv())?;
    written.push(path);

    let horizons = &cfg.evaluate.horizons;
    let b = &cfg.baselines;
    for &k in &b.linear_orders {
        let name = ModelName::Linear(k);
        let model = fit_linear_ar_selected(&train, &validation, k, horizons, &b.lambda_grid)
            .context(|| format!("train {name}"))?;
        let lambdas: Vec<String> = model.horizons().map(|h| format!("{h}:{}", model.weights(h).expect("fitted").lambda)).collect();
        eprintln!("train {name}: lambda per horizon {}", lambdas.join(" "));
        let path = dir.join(name.file_name().expect("stored"));
        write(&path, model.to_bytes())?;
        written.push(path);
    }
    for &n in &b.hmm_states {
        let name = ModelName::Hmm(n);
        let em = EmConfig {
            n_states: n,
            iterations: b.hmm_iterations,
            variance_floor: b.variance_floor,
            restarts: b.hmm_restarts,
        };
        let mut rng = Rng::new(seed).substream(&name.to_string());
        let fit = hmm_em_fit(&train, &em, &mut rng).context(|| format!("train {name}"))?;
        eprintln!(
            "train {name}: log-likelihood {} after {} iterations",
            format_value(*fit.log_likelihoods.last().expect("at least one")),
            b.hmm_iterations
        );
        let path = dir.join(name.file_name().expect("stored"));
        write(&path, fit.model.to_bytes())?;
        written.push(path);
    }
    Ok(written)
}

/// A model file of any supported kind, recognized by its magic bytes.
#[derive(Debug, Clone)]
pub enum LoadedModel {
    Spr(SprParams),
    Linear(LinearArModel),
    Hmm(GaussianHmm),
}

impl LoadedModel {
    pub fn from_bytes(bytes: &[u8]) -> sprdm_core::Result<Self> {
        let magic = bytes.get(..4).unwrap_or(bytes);
        if magic == MODEL_MAGIC {
            SprParams::from_bytes(bytes).map(LoadedModel::Spr)
        } else if magic == LINEAR_MAGIC {
            LinearArModel::from_bytes(bytes).map(LoadedModel::Linear)
        } else if magic == HMM_MAGIC {
            GaussianHmm::from_bytes(bytes).map(LoadedModel::Hmm)
        } else {
            Err(sprdm_core::Error::CorruptModelFile {
                offset: 0,
                reason: format!("unrecognized magic {magic:?}; expected SPRM, LINA or GHMM"),
            })
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        if !path.exists() {
            return Err(CliError::MissingModel(path.to_path_buf()));
        }
        Self::from_bytes(&read(path)?).context(|| format!("loading {}", path.display()))
    }

    pub fn forecaster(&self) -> &dyn Forecaster {
        match self {
            LoadedModel::Spr(m) => m,
            LoadedModel::Linear(m) => m,
            LoadedModel::Hmm(m) => m,
        }
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            LoadedModel::Spr(m) => m.obs_dim(),
            LoadedModel::Linear(m) => m.obs_dim(),
            LoadedModel::Hmm(m) => m.obs_dim(),
        }
    }

    /// Prediction of `x_{t+k}` from the first `t` observations of `seq`.
    pub fn predict(&self, seq: &Sequence, t: usize, k: usize) -> sprdm_core::Result<Vec<f64>> {
        if t == 0 || t > seq.len() {
            return Err(sprdm_core::Error::HorizonOutOfRange(format!(
                "t = {t} outside 1..={} for sequence `{}`",
                seq.len(),
                seq.id()
            )));
        }
        if k == 0 {
            return Err(sprdm_core::Error::HorizonOutOfRange("k must be at least 1".into()));
        }
        match self {
            LoadedModel::Spr(m) => predict_horizon(m, seq, t, k),
            LoadedModel::Linear(m) => m.predict_at(seq, t, k),
            LoadedModel::Hmm(m) => hmm_predict(m, seq, t, k),
        }
    }
}

/// Scores every configured model on the test split and writes one report
/// per model plus the comparison table.
pub fn evaluate_models(cfg: &RunConfig) -> Result<(Vec<HorizonReport>, ComparisonTable), CliError> {
    let dir = cfg.output_dir()?;
    let test = load_split(dir, "test")?;
    let obs_dim = test
        .first()
        .map(Sequence::obs_dim)
        .ok_or_else(|| CliError::Core {
            context: "evaluate".into(),
            source: sprdm_core::Error::TooFewSequences("the test split is empty".into()),
        })?;
    let e = &cfg.evaluate;
    let mut reports = Vec::new();
    for name in cfg.evaluated_models() {
        let report = match name.file_name() {
            None => evaluate("average", &AveragePredictor { obs_dim }, &test, &e.horizons, e.min_prefix),
            Some(file) => {
                let model = LoadedModel::load(&dir.join(file))?;
                evaluate(&name.to_string(), model.forecaster(), &test, &e.horizons, e.min_prefix)
            }
        }
        .context(|| format!("evaluate {name}"))?;
        if !report.missing.is_empty() {
            eprintln!("evaluate {name}: no test positions at horizons {:?}", report.missing);
        }
        write(&dir.join(report_file(&name)), report.to_csv())?;
        reports.push(report);
    }
    let table = compare(&reports);
    if !table.dropped.is_empty() {
        eprintln!("evaluate: horizons {:?} are not shared by every model and were dropped", table.dropped);
    }
    write(&dir.join(COMPARISON), table.to_csv())?;
    Ok((reports, table))
}

/// Formats a prediction as space-separated values with 17 significant
/// digits.
pub fn format_prediction(values: &[f64]) -> String {
    values.iter().map(|&v| format_value(v)).collect::<Vec<_>>().join(" ")
}

pub fn predict(model: &Path, sequences: &Path, id: Option<&str>, t: usize, k: usize) -> Result<String, CliError> {
    let model = LoadedModel::load(model)?;
    let seqs = load_sequences(sequences).context(|| format!("reading {}", sequences.display()))?;
    let seq = match id {
        Some(id) => seqs
            .iter()
            .find(|s| s.id() == id)
            .ok_or_else(|| CliError::Usage(format!("no sequence `{id}` in {}", sequences.display())))?,
        None => seqs
            .first()
            .ok_or_else(|| CliError::Usage(format!("{} holds no sequences", sequences.display())))?,
    };
    let values = model.predict(seq, t, k).context(|| "predict".into())?;
    Ok(format_prediction(&values))
}
