//! Batch auditing toolkit for measuring how language models represent
//! sociodemographic personas.
//!
//! The crate covers the full audit pipeline:
//!
//! * [`matrix`] — the prompt matrix: demographic groups, role-adoption and
//!   priming strategies, template rendering, and grid expansion into concrete
//!   prompt jobs.
//! * [`gateway`] — an HTTP client for OpenAI-style chat/completions/embedding
//!   endpoints with bounded concurrency, retries, option scoring, and an
//!   LLM-judge helper.
//! * [`store`] — an append-only JSONL response store with resume support,
//!   integrity checks, and deterministic queries.
//! * [`preprocess`] — answer extraction, identity redaction, language
//!   identification, and role-violation screening of raw responses.
//! * [`open_metrics`] — open-ended representation measures: weighted log-odds
//!   marked words, a one-vs-rest linear classifier, semantic diversity, and
//!   stereotype-lexicon shares.
//! * [`closed_metrics`] — closed-ended alignment measures: option-logprob
//!   distributions, Wasserstein distance against human reference
//!   distributions, majority match, random baselines, and log-probability
//!   validation by sampling.
//! * [`stats`] — design-matrix encoding, ordinary least squares with
//!   classical standard errors, per-model normalization, and group-disparity
//!   summaries.
//! * [`runner`] — run configuration and the staged pipeline (plan, collect,
//!   preprocess, metrics, analyze, report) used by the CLI.

pub mod closed_metrics;
pub mod error;
pub mod gateway;
pub mod matrix;
pub mod open_metrics;
pub mod preprocess;
pub mod runner;
pub mod stats;
pub mod store;

pub use error::{Error, Result};

#[cfg(doctest)]
mod booktests;
