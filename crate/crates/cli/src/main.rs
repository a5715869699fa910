//! `icoclust`: extract, featurize, train-ae, cluster, experiment.
//!
//! Exit codes: 0 success, 1 internal error, 2 bad input or unmet precondition.

mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use config::PipelineConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        Self::Input(msg.into())
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        Self::Internal(msg.into())
    }

    fn exit_code(&self) -> u8 {
        match self {
            Self::Input(_) => 2,
            Self::Internal(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "icoclust", version, about = "Icon-cluster features for static malware detection")]
struct Cli {
    /// TOML pipeline configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// PE section features and primary icons from a directory of PE/ICO files.
    Extract {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the autoencoder on an icon store.
    TrainAe {
        #[arg(long)]
        icons: PathBuf,
        /// Model JSON to write.
        #[arg(long)]
        out: PathBuf,
        /// Loss trace CSV (default: `<model stem>.trace.csv`).
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// 1114-column feature CSV for every icon in a store.
    Featurize {
        #[arg(long)]
        icons: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// HDBSCAN + k-means clustering; writes the model and assignments.
    Cluster {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assign new feature rows with a saved cluster model.
    Assign {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the three classifiers with and without icon clusters.
    Experiment {
        #[arg(long)]
        pefile: PathBuf,
        #[arg(long)]
        assignments: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Takes the number of cluster ids from this model instead of the assignments.
        #[arg(long)]
        cluster_model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a seeded synthetic labeled corpus.
    Synth {
        #[arg(long, default_value_t = 400)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        corpus_seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<String, CliError> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(CliError::input("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::internal(e.to_string()))?;
    }
    let cfg = PipelineConfig::load(cli.config.as_deref(), cli.seed)?;
    match cli.command {
        Command::Extract { input, out } => commands::extract(&input, &out),
        Command::TrainAe { icons, out, trace } => commands::train_ae(&icons, &out, trace.as_deref(), &cfg),
        Command::Featurize { icons, model, out } => commands::featurize(&icons, &model, &out),
        Command::Cluster { features, out } => commands::cluster(&features, &out, &cfg),
        Command::Assign { model, features, out } => commands::assign(&model, &features, &out),
        Command::Experiment { pefile, assignments, labels, cluster_model, out } => {
            let inputs = commands::ExperimentInputs {
                pefile: &pefile,
                assignments: &assignments,
                labels: &labels,
                cluster_model: cluster_model.as_deref(),
            };
            commands::experiment(&inputs, &out, &cfg)
        }
        Command::Synth { count, corpus_seed, out } => commands::synth(count, corpus_seed, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(summary)) => {
            eprintln!("{summary}");
            ExitCode::SUCCESS
        }
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
        Err(_) => ExitCode::from(1),
    }
}
