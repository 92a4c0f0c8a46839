//! `freqx`: train, explain and evaluate dense classifiers from the command line.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use freqx::experiments::{run, CsvSource, DatasetSource, Experiment, RunConfig};

#[derive(Parser)]
#[command(name = "freqx", version, about = "Spatial-transformation explanations for dense networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a classifier and save its checkpoint.
    Train(Shared),
    /// Explain test samples and export the transformation records.
    Explain(Shared),
    /// Frequency-domain deletion and insertion games.
    Freqdig(Shared),
    /// Feature-domain deletion and insertion games.
    Delins(Shared),
    /// Concept clustering, epsilon sweep and ablations.
    Concepts(Shared),
    /// Feature selection by importance and retraining.
    FedStep1(Shared),
    /// Client contribution against exact Shapley values.
    FedStep2(Shared),
    /// Monte-Carlo check that activation raises the SNR.
    VerifyTheory(Shared),
}

#[derive(Args)]
struct Shared {
    /// TOML config, or a manifest.json from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Accept epsilon = 0 (explain only).
    #[arg(long)]
    allow_zero_epsilon: bool,
    /// Use this checkpoint instead of training.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// CSV dataset with a header row.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Label column of the CSV dataset.
    #[arg(long, default_value = "label", requires = "dataset")]
    label_column: String,
    #[arg(long)]
    repetitions: Option<usize>,
}

impl Command {
    fn split(self) -> (Experiment, Shared) {
        match self {
            Command::Train(s) => (Experiment::Train, s),
            Command::Explain(s) => (Experiment::Explain, s),
            Command::Freqdig(s) => (Experiment::Freqdig, s),
            Command::Delins(s) => (Experiment::Delins, s),
            Command::Concepts(s) => (Experiment::Concepts, s),
            Command::FedStep1(s) => (Experiment::FedStep1, s),
            Command::FedStep2(s) => (Experiment::FedStep2, s),
            Command::VerifyTheory(s) => (Experiment::VerifyTheory, s),
        }
    }
}

fn build_config(experiment: Experiment, flags: Shared) -> freqx::Result<RunConfig> {
    let mut cfg = match &flags.config {
        Some(path) => RunConfig::from_path(path)?,
        None => RunConfig::new(experiment, 0),
    };
    cfg.experiment = experiment;
    if let Some(seed) = flags.seed {
        cfg.seed = seed;
    }
    if flags.epsilon.is_some() {
        cfg.epsilon = flags.epsilon;
    }
    if let Some(out) = flags.out {
        cfg.out = out;
    }
    if flags.allow_zero_epsilon {
        cfg.allow_zero_epsilon = true;
    }
    if flags.checkpoint.is_some() {
        cfg.checkpoint = flags.checkpoint;
    }
    if let Some(path) = flags.dataset {
        cfg.dataset = Some(DatasetSource::Csv(CsvSource {
            path,
            label_column: flags.label_column,
            categorical_columns: Vec::new(),
        }));
    }
    if flags.repetitions.is_some() {
        cfg.repetitions = flags.repetitions;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let (experiment, flags) = Cli::parse().command.split();
    let outcome = build_config(experiment, flags).and_then(|cfg| run(&cfg));
    match outcome {
        Ok(summary) => {
            for (key, value) in &summary.headlines {
                println!("{key} = {value}");
            }
            if let Some(hash) = &summary.model_hash {
                println!("model_hash = {hash}");
            }
            for file in &summary.files {
                println!("wrote {}", file.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let line = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{line}");
            ExitCode::from(2)
        }
    }
}
