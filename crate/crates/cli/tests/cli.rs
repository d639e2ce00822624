use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sprdm_cli::commands::{sha256_hex, Manifest};
use sprdm_core::datasets::{format_value, load_sequences};
use sprdm_core::spr::{predict_horizon, SprParams};
use tempfile::TempDir;

const SMALL: &str = r#"seed = 1
output_dir = "run"

[dataset]
kind = "example42"
n_sequences = 40
length = 12

[train]
state_dim = 3
learning_rate = 0.05
updates_per_timestep = 30
mixing_iterations = 30

[baselines]
hmm_states = [2]
hmm_iterations = 10

[evaluate]
horizons = [1, 2, 4]
"#;

fn sprdm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sprdm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("run.toml"), config).unwrap();
        Workspace { dir }
    }

    fn config(&self) -> String {
        self.dir.path().join("run.toml").display().to_string()
    }

    fn run_dir(&self) -> PathBuf {
        self.dir.path().join("run")
    }

    fn step(&self, cmd: &str, extra: &[&str]) -> Output {
        let cfg = self.config();
        let mut args = vec![cmd, "--config", cfg.as_str()];
        args.extend_from_slice(extra);
        sprdm(&args)
    }

    fn ok(&self, cmd: &str) {
        let out = self.step(cmd, &[]);
        assert_eq!(out.status.code(), Some(0), "{cmd}: {}", stderr(&out));
    }
}

fn read(path: &Path) -> Vec<u8> {
    fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn generate_hashes_match_and_rerun_is_identical() {
    let ws = Workspace::new(SMALL);
    ws.ok("generate");
    let dir = ws.run_dir();
    let manifest: Manifest = serde_json::from_slice(&read(&dir.join("manifest.json"))).unwrap();
    assert_eq!(manifest.seed, 1);
    assert_eq!(manifest.files.len(), 3);
    let first: Vec<Vec<u8>> = manifest.files.keys().map(|f| read(&dir.join(f))).collect();
    for ((file, hash), bytes) in manifest.files.iter().zip(&first) {
        assert_eq!(&sha256_hex(bytes), hash, "{file}");
    }
    ws.ok("generate");
    for (file, bytes) in manifest.files.keys().zip(&first) {
        assert_eq!(&read(&dir.join(file)), bytes, "{file}");
    }
}

#[test]
fn missing_seed_is_a_config_error() {
    let ws = Workspace::new(&SMALL.replace("seed = 1\n", ""));
    let out = ws.step("generate", &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("`seed`"), "{}", stderr(&out));
    let out = ws.step("generate", &["--seed", "4"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
}

#[test]
fn config_errors_exit_one() {
    for (config, key) in [
        (SMALL.replace("kind = \"example42\"", "kind = \"example42\"\ncolour = 3"), "colour"),
        (SMALL.replace("horizons = [1, 2, 4]", "horizons = []"), "evaluate.horizons"),
        (SMALL.replace("learning_rate = 0.05", "learning_rate = 0.0"), "train.learning_rate"),
    ] {
        let ws = Workspace::new(&config);
        let out = ws.step("generate", &[]);
        assert_eq!(out.status.code(), Some(1), "{key}");
        assert!(stderr(&out).contains(key), "{key}: {}", stderr(&out));
    }
    let out = sprdm(&["train", "--config", "/nonexistent/run.toml"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(sprdm(&["bogus"]).status.code(), Some(1));
    assert_eq!(sprdm(&["--help"]).status.code(), Some(0));
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let ws = Workspace::new(SMALL);
    ws.ok("generate");
    ws.ok("train");
    let dir = ws.run_dir();
    for f in ["spr.model", "linear-2.model", "linear-5.model", "hmm-2.model", "train_report.csv"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let report = String::from_utf8(read(&dir.join("train_report.csv"))).unwrap();
    assert!(report.starts_with("stage,iteration,loss\n"));
    assert!(report.contains("mixing,"));
    let out = ws.step("evaluate", &[]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    for m in ["spr", "linear-2", "linear-5", "hmm-2", "average"] {
        assert!(dir.join(format!("report_{m}.csv")).exists(), "{m}");
    }
    let table = String::from_utf8(read(&dir.join("comparison.csv"))).unwrap();
    assert_eq!(String::from_utf8_lossy(&out.stdout), table);
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("horizon,spr,linear-2,linear-5,hmm-2,average"));
    let horizons: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(horizons, ["1", "2", "4"]);
}

#[test]
fn zero_mixing_still_trains() {
    let ws = Workspace::new(&SMALL.replace("mixing_iterations = 30", "mixing_iterations = 0"));
    ws.ok("generate");
    ws.ok("train");
    let report = String::from_utf8(read(&ws.run_dir().join("train_report.csv"))).unwrap();
    assert!(report.contains("initialization/t=2,"));
    assert!(report.contains("projection/j=0,"));
    assert!(!report.contains("\nmixing,"));
}

#[test]
fn corrupt_dataset_surfaces_parse_error() {
    let ws = Workspace::new(SMALL);
    ws.ok("generate");
    let path = ws.run_dir().join("train.seq");
    let text = String::from_utf8(read(&path)).unwrap();
    fs::write(&path, text.replacen("0.0000000000000000e0", "zero", 1)).unwrap();
    let out = ws.step("train", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("parse error"), "{}", stderr(&out));
}

#[test]
fn tampered_dataset_fails_the_manifest_check() {
    let ws = Workspace::new(SMALL);
    ws.ok("generate");
    let path = ws.run_dir().join("validation.seq");
    let text = String::from_utf8(read(&path)).unwrap();
    let flipped = text.replacen("0.0000000000000000e0", "1.0000000000000000e0", 1);
    assert_ne!(flipped, text);
    fs::write(&path, flipped).unwrap();
    let out = ws.step("train", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("recorded hash"), "{}", stderr(&out));
}

#[test]
fn single_model_comparison_equals_its_report() {
    let ws = Workspace::new(&SMALL.replace("horizons = [1, 2, 4]", "horizons = [1, 2, 4]\nmodels = [\"linear-2\"]"));
    ws.ok("generate");
    ws.ok("train");
    ws.ok("evaluate");
    let dir = ws.run_dir();
    let table = String::from_utf8(read(&dir.join("comparison.csv"))).unwrap();
    let report = String::from_utf8(read(&dir.join("report_linear-2.csv"))).unwrap();
    let from_report: Vec<(String, String)> = report
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("horizon"))
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].to_string())
        })
        .collect();
    let from_table: Vec<(String, String)> = table
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].to_string())
        })
        .collect();
    assert_eq!(from_table, from_report);
    assert!(!dir.join("report_spr.csv").exists());
}

#[test]
fn evaluate_without_models_is_a_runtime_error() {
    let ws = Workspace::new(SMALL);
    ws.ok("generate");
    let out = ws.step("evaluate", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("spr.model"), "{}", stderr(&out));
}

#[test]
fn predict_matches_library_and_repeats() {
    let ws = Workspace::new(SMALL);
    ws.ok("generate");
    ws.ok("train");
    let dir = ws.run_dir();
    let model = dir.join("spr.model").display().to_string();
    let test = dir.join("test.seq").display().to_string();
    let params = SprParams::from_bytes(&read(&dir.join("spr.model"))).unwrap();
    let seqs = load_sequences(dir.join("test.seq")).unwrap();
    for (t, k) in [(1, 1), (5, 1), (7, 3)] {
        let expected: Vec<String> = predict_horizon(&params, &seqs[0], t, k).unwrap().into_iter().map(format_value).collect();
        let args = ["predict", "--model", &model, &test, "--t", &t.to_string(), "--k", &k.to_string()].map(String::from);
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let first = sprdm(&args);
        assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));
        assert_eq!(String::from_utf8_lossy(&first.stdout).trim_end(), expected.join(" "));
        assert_eq!(sprdm(&args).stdout, first.stdout);
    }
    for name in ["linear-2", "linear-5", "hmm-2"] {
        let m = dir.join(format!("{name}.model")).display().to_string();
        let out = sprdm(&["predict", "--model", &m, &test, "--t", "4", "--k", "2"]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", stderr(&out));
        let values = String::from_utf8_lossy(&out.stdout);
        assert_eq!(values.split_whitespace().count(), 1, "{name}");
    }
}

#[test]
fn predict_rejects_out_of_range_prefix() {
    let ws = Workspace::new(SMALL);
    ws.ok("generate");
    ws.ok("train");
    let dir = ws.run_dir();
    let model = dir.join("spr.model").display().to_string();
    let test = dir.join("test.seq").display().to_string();
    let out = sprdm(&["predict", "--model", &model, &test, "--t", "13", "--k", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("1..=12"), "{}", stderr(&out));
    let junk = ws.dir.path().join("junk.model");
    fs::write(&junk, b"NOPE0000").unwrap();
    let out = sprdm(&["predict", "--model", &junk.display().to_string(), &test, "--t", "2", "--k", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("magic"), "{}", stderr(&out));
}

#[test]
fn out_flag_overrides_output_dir() {
    let ws = Workspace::new(SMALL);
    let other = ws.dir.path().join("elsewhere");
    let out = ws.step("generate", &["--out", &other.display().to_string()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(other.join("manifest.json").exists());
    assert!(!ws.run_dir().exists());
}

#[test]
fn files_dataset_is_split_and_normalized() {
    let ws = Workspace::new("");
    let src = ws.dir.path().join("walks.seq");
    let mut text = String::new();
    for i in 0..10 {
        if i > 0 {
            text.push('\n');
        }
        text.push_str(&format!("#SEQ walk-{i} 4 2\n"));
        for t in 0..4 {
            text.push_str(&format!("{} {}\n", format_value((i * t) as f64), format_value(3.0 - t as f64)));
        }
    }
    fs::write(&src, text).unwrap();
    fs::write(
        ws.dir.path().join("run.toml"),
        "seed = 2\noutput_dir = \"run\"\n[dataset]\nkind = \"files\"\npath = \"walks.seq\"\nsplit = [6.0, 2.0, 2.0]\n",
    )
    .unwrap();
    ws.ok("generate");
    let manifest: Manifest = serde_json::from_slice(&read(&ws.run_dir().join("manifest.json"))).unwrap();
    assert_eq!(manifest.counts["train"], 6);
    assert!(manifest.normalization.scale > 0.0);
    assert_eq!(manifest.normalization.means.len(), 2);
}
