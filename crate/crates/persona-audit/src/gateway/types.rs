//! Plain data types shared between the HTTP client, the store, and the
//! closed-ended metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DecodingParams;

/// Connection profile for one model endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointProfile {
    /// Base URL, e.g. `http://127.0.0.1:8700/v1`.
    pub base_url: String,
    /// Model identifier forwarded in every request.
    pub model: String,
    #[serde(default)]
    pub decoding: DecodingParams,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Upper bound on concurrently outstanding requests to this endpoint.
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    /// Environment variable holding the bearer token, if the endpoint needs
    /// one. Credentials never appear in config files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    /// How answer options are scored for the survey task.
    #[serde(default)]
    pub logprob_mode: LogprobMode,
}

fn default_timeout_ms() -> u64 {
    60_000
}

fn default_max_in_flight() -> usize {
    8
}

impl EndpointProfile {
    pub fn validate(&self) -> Result<()> {
        if self.decoding.temperature < 0.0 {
            return Err(Error::Config(format!(
                "endpoint '{}': temperature must be ≥ 0",
                self.model
            )));
        }
        if self.max_in_flight == 0 {
            return Err(Error::Config(format!(
                "endpoint '{}': max_in_flight must be ≥ 1",
                self.model
            )));
        }
        Ok(())
    }
}

/// Retry policy for transient failures: exponential backoff starting at
/// `backoff_ms`, doubling per attempt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            backoff_ms: 200,
        }
    }
}

/// Mechanism used to extract per-option log-probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogprobMode {
    /// Score each option as the answer-field continuation via the echo
    /// completions endpoint. Exact, the default.
    #[default]
    Echo,
    /// Match options against the top-k token log-probs of the first sampled
    /// token. Approximate; results carry a limitation flag.
    FirstToken,
    /// The endpoint exposes no log-probabilities at all.
    Unsupported,
}

/// Temperature-scaled log-probabilities of each answer option for one
/// survey prompt.
///
/// Entries are `None` when the endpoint could not score that option (e.g.
/// the option never appeared in a top-k list); such results carry the
/// information in-band rather than failing the job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionLogprobs {
    pub question_id: String,
    pub options: Vec<String>,
    /// Log-probability per option, already divided by the sampling
    /// temperature, aligned with `options`.
    pub logprobs: Vec<Option<f64>>,
    /// Temperature the scores were scaled with.
    pub temperature: f64,
    /// True when options were matched by first token only.
    #[serde(default)]
    pub first_token_match: bool,
}

impl OptionLogprobs {
    pub fn validate(&self) -> Result<()> {
        if self.options.len() != self.logprobs.len() {
            return Err(Error::Validation(format!(
                "question '{}': {} options but {} log-probabilities",
                self.question_id,
                self.options.len(),
                self.logprobs.len()
            )));
        }
        if self.options.len() < 2 {
            return Err(Error::Validation(format!(
                "question '{}': at least 2 options required",
                self.question_id
            )));
        }
        for (option, lp) in self.options.iter().zip(&self.logprobs) {
            if let Some(lp) = lp {
                if !lp.is_finite() {
                    return Err(Error::Validation(format!(
                        "question '{}': non-finite log-probability for option '{option}'",
                        self.question_id
                    )));
                }
            }
        }
        Ok(())
    }

    /// True when at least one option could not be scored.
    pub fn has_absent(&self) -> bool {
        self.logprobs.iter().any(Option::is_none)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_validation_catches_bad_values() {
        let mut profile = EndpointProfile {
            base_url: "http://localhost:1/v1".to_string(),
            model: "m".to_string(),
            decoding: DecodingParams::default(),
            timeout_ms: 1000,
            max_in_flight: 4,
            retry: RetryPolicy::default(),
            api_key_env: None,
            logprob_mode: LogprobMode::Echo,
        };
        assert!(profile.validate().is_ok());
        profile.decoding.temperature = -0.1;
        assert!(profile.validate().is_err());
        profile.decoding.temperature = 1.0;
        profile.max_in_flight = 0;
        assert!(profile.validate().is_err());
    }

    #[test]
    fn option_logprobs_validation() {
        let mut ol = OptionLogprobs {
            question_id: "Q1".to_string(),
            options: vec!["Yes".to_string(), "No".to_string()],
            logprobs: vec![Some(-0.5), None],
            temperature: 1.0,
            first_token_match: false,
        };
        assert!(ol.validate().is_ok());
        assert!(ol.has_absent());
        ol.logprobs = vec![Some(-0.5)];
        assert!(ol.validate().is_err());
        ol.logprobs = vec![Some(f64::NAN), Some(-0.5)];
        assert!(ol.validate().is_err());
    }
}
