//! HTTP access to model endpoints: chat completions, option scoring,
//! embeddings, and the role-violation judge.

mod client;
mod types;

pub use client::{ChatOutcome, GatewayClient, JUDGE_INSTRUCTION};
pub use types::{EndpointProfile, LogprobMode, OptionLogprobs, RetryPolicy};
