//! The audit pipeline: staged, resumable orchestration from prompt grid to
//! report.
//!
//! A run lives in one directory (`out_dir` in the config):
//!
//! ```text
//! out_dir/
//!   store/      raw responses + embeddings (append-only JSONL, manifest)
//!   exports/    derived metric tables (TSV, machine-readable)
//!   reports/    plan.txt, report.txt, summary.json (human-readable)
//! ```
//!
//! Stages run in order — collect, preprocess, metrics-open / metrics-closed,
//! analyze, validate-logprobs, report — and each is idempotent: rerunning a
//! stage whose inputs did not change rewrites no bytes, and collect resumes
//! from whatever the store already holds. Everything derived is recomputed
//! from the store, so deleting `exports/` and rerunning the metric stages
//! reproduces it exactly.

mod analyze;
mod collect;
mod config;
mod metrics;
mod prep;
mod report;
mod tsv;

pub use config::{
    load_config, load_questions, BaselineConfig, RunConfig, RunContext, ValidationConfig,
};
pub use tsv::{fmt_f64, fmt_opt, write_if_changed, TsvTable, NA};

use std::path::Path;

use crate::error::Result;

/// One pipeline stage, in the order they are meant to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageCommand {
    /// Print the grid plan without issuing any requests.
    Plan,
    /// Collect responses for every job not yet in the store.
    Collect,
    /// Extract, redact, screen, and language-tag open-ended responses.
    Preprocess,
    /// Open-ended metrics: marked words, diversity, language, stereotypes,
    /// classifier probe.
    MetricsOpen,
    /// Closed-ended metrics: alignment distances and random baselines.
    MetricsClosed,
    /// Group/prompt-type aggregation, disparity, and regressions.
    Analyze,
    /// Sampled-answer cross-check of the log-probability scoring.
    ValidateLogprobs,
    /// Assemble the human-readable report and JSON summary.
    Report,
}

/// Loads the config at `config_path` and runs one stage.
pub async fn run_audit(command: StageCommand, config_path: &Path) -> Result<()> {
    let ctx = RunContext::load(config_path)?;
    match command {
        StageCommand::Plan => collect::run_plan(&ctx),
        StageCommand::Collect => collect::run_collect(&ctx).await,
        StageCommand::Preprocess => prep::run_preprocess(&ctx).await,
        StageCommand::MetricsOpen => metrics::run_metrics_open(&ctx).await,
        StageCommand::MetricsClosed => metrics::run_metrics_closed(&ctx),
        StageCommand::Analyze => analyze::run_analyze(&ctx),
        StageCommand::ValidateLogprobs => report::run_validate_logprobs(&ctx).await,
        StageCommand::Report => report::run_report(&ctx),
    }
}
