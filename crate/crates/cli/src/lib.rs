//! Config-driven pipeline around `sprdm-core`: generate a dataset, train SPR
//! and the baselines, score them over several horizons, and query single
//! predictions.

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "sprdm", version, about = "Train and compare learned sequence predictors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write train/validation/test sequence files and a manifest.
    Generate(RunArgs),
    /// Train SPR and the configured baselines.
    Train(RunArgs),
    /// Score every model over the configured horizons.
    Evaluate(RunArgs),
    /// Print the prediction of x_{t+k} from the first t observations.
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Run directory; overrides `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Sequence file to read the prefix from.
    pub sequences: PathBuf,
    /// Prefix length.
    #[arg(long)]
    pub t: usize,
    /// Horizon.
    #[arg(long)]
    pub k: usize,
    /// Id of the sequence to use; defaults to the first one in the file.
    #[arg(long)]
    pub sequence: Option<String>,
}

impl RunArgs {
    pub fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(out) = &self.out {
            cfg.output_dir = Some(out.clone());
        }
        if let Some(seed) = self.seed {
            cfg.seed = Some(seed);
        }
        Ok(cfg)
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate(a) => commands::generate(&a.load()?).map(drop),
        Command::Train(a) => commands::train(&a.load()?).map(drop),
        Command::Evaluate(a) => {
            let (_, table) = commands::evaluate_models(&a.load()?)?;
            print!("{}", table.to_csv());
            Ok(())
        }
        Command::Predict(a) => {
            let line = commands::predict(&a.model, &a.sequences, a.sequence.as_deref(), a.t, a.k)?;
            println!("{line}");
            Ok(())
        }
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
