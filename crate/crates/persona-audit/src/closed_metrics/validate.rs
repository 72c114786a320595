//! Validation of the log-probability pathway against repeated sampling.
//!
//! The survey pipeline never samples: it scores each answer option's
//! log-probability directly. To check that shortcut against reality, the
//! same prompt is run many times with distinct seeds, the sampled answers
//! are tallied into an empirical distribution, and the Wasserstein distance
//! between the empirical and the scored distribution is reported. The
//! endpoint-driving wrapper lives with the gateway; [`compare_sampled`] is
//! the pure core.

use serde::{Deserialize, Serialize};

use super::{wasserstein_1d, AnswerDistribution, Wasserstein};
use crate::{Error, Result};

/// Maximum tolerated share of unparsable sampled answers.
const MAX_UNPARSED_SHARE: f64 = 0.20;

/// Result of validating one question's scored distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogprobValidation {
    pub question_id: String,
    /// Sampled generations requested.
    pub samples: usize,
    /// Generations whose answer could not be mapped to an option.
    pub unparsed: usize,
    /// Distance between the empirical and the scored distribution.
    pub wasserstein: Wasserstein,
}

/// Tally sampled answers (`None` = unparsable generation) into an empirical
/// distribution over `scored.options` and compare the two distributions.
/// Aborts when more than 20% of the samples are unusable.
pub fn compare_sampled(
    sampled: &[Option<String>],
    scored: &AnswerDistribution,
) -> Result<LogprobValidation> {
    if sampled.is_empty() {
        return Err(Error::Validation(format!(
            "question '{}': no samples to validate against",
            scored.question_id
        )));
    }
    let mut counts = vec![0u64; scored.options.len()];
    let mut unparsed = 0usize;
    for answer in sampled {
        let index = answer.as_ref().and_then(|text| {
            let text = text.trim();
            scored
                .options
                .iter()
                .position(|option| option.trim().eq_ignore_ascii_case(text))
        });
        match index {
            Some(i) => counts[i] += 1,
            None => unparsed += 1,
        }
    }
    let share = unparsed as f64 / sampled.len() as f64;
    if share > MAX_UNPARSED_SHARE {
        return Err(Error::Validation(format!(
            "question '{}': {unparsed} of {} sampled answers unparsable ({:.0}% > {:.0}%); \
             validation aborted",
            scored.question_id,
            sampled.len(),
            share * 100.0,
            MAX_UNPARSED_SHARE * 100.0
        )));
    }
    let total: u64 = counts.iter().sum();
    let empirical = AnswerDistribution {
        question_id: scored.question_id.clone(),
        options: scored.options.clone(),
        probs: counts.iter().map(|&c| c as f64 / total as f64).collect(),
        absent_options: 0,
    };
    Ok(LogprobValidation {
        question_id: scored.question_id.clone(),
        samples: sampled.len(),
        unparsed,
        wasserstein: wasserstein_1d(&empirical, scored)?,
    })
}
