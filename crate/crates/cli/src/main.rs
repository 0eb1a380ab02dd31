use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cloud_core::data::NegativeSpec;
use cloud_core::model::{Directionality, ModifierMode};

mod commands;
mod config;
mod error;

use config::ExperimentConfig;
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "cloud", version, about = "Privacy-by-confusion sequential recommendation")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

/// Overrides applied on top of the config file.
#[derive(Args, Debug, Clone, Default)]
pub struct GlobalArgs {
    /// TOML or JSON experiment config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// cloud, variant1, variant2 or steam.
    #[arg(long, global = true)]
    pub mode: Option<ModifierMode>,
    /// bi or uni.
    #[arg(long, global = true)]
    pub recommender: Option<Directionality>,
    /// Negatives per held-out item: a count or "all".
    #[arg(long, global = true)]
    pub negatives: Option<NegativeSpec>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a seeded synthetic interaction log.
    Synth(commands::SynthArgs),
    /// Filter a raw log and build sequences and the item vocabulary.
    Preprocess(commands::PreprocessArgs),
    /// Build the similar-sequence index and freeze evaluation negatives.
    BuildIndex(commands::DataArgs),
    /// Train the modifier and recommender jointly; writes a checkpoint.
    Train(commands::TrainArgs),
    /// Decode modified sequences with a trained checkpoint.
    Modify(commands::ModifyArgs),
    /// Rank held-out items and report HR@K / MRR@K.
    Evaluate(commands::EvaluateArgs),
    /// Similarity and keep/delete/insert proportions of the modifier.
    PrivacyReport(commands::PrivacyArgs),
    /// Write a copy of the dataset with simulated noise.
    SimulateNoise(commands::SimulateArgs),
    /// Compare metrics on simulated and real data.
    Robustness(commands::RobustnessArgs),
}

fn load_config(global: &GlobalArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &global.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = global.seed {
        cfg.seed = s;
    }
    if let Some(m) = global.mode {
        cfg.model.mode = m;
    }
    if let Some(r) = global.recommender {
        cfg.model.recommender = r;
    }
    if let Some(n) = global.negatives {
        cfg.negatives = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(&cli.global)?;
    let g = &cli.global;
    match cli.command {
        Command::Synth(a) => commands::synth(&cfg, a),
        Command::Preprocess(a) => commands::preprocess(&cfg, a),
        Command::BuildIndex(a) => commands::build_index(&cfg, a),
        Command::Train(a) => commands::train(cfg, a),
        Command::Modify(a) => commands::modify(&cfg, g, a),
        Command::Evaluate(a) => commands::evaluate(&cfg, g, a),
        Command::PrivacyReport(a) => commands::privacy(&cfg, g, a),
        Command::SimulateNoise(a) => commands::simulate(&cfg, a),
        Command::Robustness(a) => commands::robustness(&cfg, g, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
