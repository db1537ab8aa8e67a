//! `caimira` — latent-trait analysis of question-answering agents.
//!
//! One verb per pipeline stage: ingest response logs, embed item texts,
//! fit the model, ablate latent dimensions, cluster questions by effective
//! difficulty, explain dimensions with logistic regression, and validate
//! everything against synthetic ground truth.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use caimira_core::CoreError;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "caimira",
    version,
    about = "Fit and interpret latent-trait models of question-answering agents"
)]
struct Cli {
    /// TOML config file supplying defaults for flags (flags > env > file).
    #[arg(long, global = true, value_name = "FILE")]
    config_file: Option<PathBuf>,

    /// Cap worker threads (overrides CAIMIRA_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Re-hash inputs recorded in the output manifest and abort on drift.
    #[arg(long, global = true)]
    verify: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a question bank and player logs into a refined response matrix.
    Ingest(commands::ingest::IngestArgs),
    /// Fetch embeddings for item texts from an embedding service.
    Embed(commands::embed::EmbedArgs),
    /// Fit model parameters by MAP estimation.
    Train(commands::model::TrainArgs),
    /// Train across several latent dimension counts and tabulate.
    Ablate(commands::model::AblateArgs),
    /// Emit the full analysis report set for a fitted model.
    Analyze(commands::analysis::AnalyzeArgs),
    /// Cluster questions on effective difficulty.
    Cluster(commands::analysis::ClusterArgs),
    /// Explain latent dimensions with class-balanced logistic regressions.
    Interpret(commands::interpretcmd::InterpretArgs),
    /// Generate a synthetic dataset from a known ground-truth model.
    Synth(commands::synthcmd::SynthArgs),
    /// Measure how well a fitted model recovers synthetic ground truth.
    Recover(commands::synthcmd::RecoverArgs),
    /// Rule predicted answers against gold answers and aliases.
    EvalMatch(commands::matchcmd::EvalMatchArgs),
}

fn exit_code_for(err: &CoreError) -> u8 {
    match err {
        CoreError::Config(_) => 2,
        CoreError::Parse { .. }
        | CoreError::Integrity(_)
        | CoreError::Format(_)
        | CoreError::Data(_)
        | CoreError::Lookup(_) => 3,
        CoreError::Training(_) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();

    let threads = cli.threads.or(config::env_threads());
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not set thread count: {e}");
        }
    }

    let file_config = match config::FileConfig::load(cli.config_file.as_deref()) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code_for(&e));
        }
    };

    let result = match cli.command {
        Command::Ingest(args) => commands::ingest::run(args, &file_config, cli.verify),
        Command::Embed(args) => commands::embed::run(args, &file_config, cli.verify),
        Command::Train(args) => commands::model::run_train(args, &file_config, cli.verify),
        Command::Ablate(args) => commands::model::run_ablate(args, &file_config, cli.verify),
        Command::Analyze(args) => commands::analysis::run_analyze(args, &file_config, cli.verify),
        Command::Cluster(args) => commands::analysis::run_cluster(args, &file_config, cli.verify),
        Command::Interpret(args) => {
            commands::interpretcmd::run(args, &file_config, cli.verify)
        }
        Command::Synth(args) => commands::synthcmd::run_synth(args, &file_config, cli.verify),
        Command::Recover(args) => commands::synthcmd::run_recover(args, &file_config, cli.verify),
        Command::EvalMatch(args) => commands::matchcmd::run(args, &file_config, cli.verify),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
