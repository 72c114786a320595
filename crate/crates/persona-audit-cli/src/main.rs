//! Command-line front end for the persona audit pipeline.
//!
//! Every subcommand is one pipeline stage; all of them take the same run
//! config and are safe to rerun (stages resume or rewrite nothing when
//! their inputs did not change).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use persona_audit::runner::{run_audit, StageCommand};

#[derive(Parser)]
#[command(
    name = "persona-audit",
    version,
    about = "Batch audits of demographic persona representation in chat models"
)]
struct Cli {
    /// Run configuration (TOML). Relative paths inside it resolve against
    /// its own directory.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print per-task job counts without issuing any requests.
    Plan,
    /// Collect every job the store does not hold yet.
    Collect,
    /// Extract, redact, screen, and language-tag open-ended responses.
    Preprocess,
    /// Open-ended metrics: marked words, diversity, languages, stereotypes.
    MetricsOpen,
    /// Survey metrics: alignment distances and random baselines.
    MetricsClosed,
    /// Group and prompt-type aggregation, disparities, and regressions.
    Analyze,
    /// Cross-check option log-probabilities against sampled answers.
    ValidateLogprobs,
    /// Assemble reports/report.txt and reports/summary.json.
    Report,
}

impl Command {
    fn stage(&self) -> StageCommand {
        match self {
            Command::Plan => StageCommand::Plan,
            Command::Collect => StageCommand::Collect,
            Command::Preprocess => StageCommand::Preprocess,
            Command::MetricsOpen => StageCommand::MetricsOpen,
            Command::MetricsClosed => StageCommand::MetricsClosed,
            Command::Analyze => StageCommand::Analyze,
            Command::ValidateLogprobs => StageCommand::ValidateLogprobs,
            Command::Report => StageCommand::Report,
        }
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run_audit(cli.command.stage(), &cli.config).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
