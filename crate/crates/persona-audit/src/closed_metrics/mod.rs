//! Closed-ended alignment measures for the survey task.
//!
//! Option log-probabilities become answer distributions via a softmax
//! ([`to_distribution`]); distributions are compared to human reference
//! distributions with the 1-D Wasserstein distance and a majority-vote match
//! ([`wasserstein_1d`], [`majority_match`]); [`random_baseline`] calibrates
//! both measures against uniform-random answering; and
//! [`aggregate_alignment`] reduces a store full of scored records to one row
//! per (group, prompt type, phrasing) cell. [`compare_sampled`] checks the
//! log-probability pathway against repeated sampling (the endpoint-driving
//! wrapper lives on the gateway client).
//!
//! A "Refused" option has no position on the ordinal answer scale, so it is
//! dropped (and both distributions renormalized) before any Wasserstein
//! computation; majority match uses the full option list.

mod aggregate;
mod alignment;
mod baseline;
mod distribution;
mod validate;

pub use aggregate::aggregate_alignment;
pub use alignment::{majority_match, wasserstein_1d, MajorityMatch, Wasserstein};
pub use baseline::{random_baseline, BaselineSummary};
pub use distribution::to_distribution;
pub use validate::{compare_sampled, LogprobValidation};

use serde::{Deserialize, Serialize};

use crate::matrix::{Group, Phrasing, PromptType};
use crate::{Error, Result};

/// A probability distribution over a question's answer options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerDistribution {
    pub question_id: String,
    pub options: Vec<String>,
    /// Probability per option, aligned with `options`.
    pub probs: Vec<f64>,
    /// Options the endpoint could not score; they carry probability 0 and
    /// the count flags the cell as approximate.
    #[serde(default)]
    pub absent_options: usize,
}

impl AnswerDistribution {
    pub fn new(question_id: impl Into<String>, options: Vec<String>, probs: Vec<f64>) -> Result<Self> {
        let dist = AnswerDistribution {
            question_id: question_id.into(),
            options,
            probs,
            absent_options: 0,
        };
        dist.validate()?;
        Ok(dist)
    }

    pub fn validate(&self) -> Result<()> {
        if self.options.len() != self.probs.len() {
            return Err(Error::Validation(format!(
                "question '{}': {} options but {} probabilities",
                self.question_id,
                self.options.len(),
                self.probs.len()
            )));
        }
        if self.probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Validation(format!(
                "question '{}': probabilities must be finite and ≥ 0",
                self.question_id
            )));
        }
        let sum: f64 = self.probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!(
                "question '{}': probabilities sum to {sum}, expected 1",
                self.question_id
            )));
        }
        Ok(())
    }
}

/// Aggregated alignment for one (group, prompt type, phrasing) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentCell {
    pub group: Group,
    pub prompt_type: PromptType,
    pub phrasing: Phrasing,
    /// Mean over questions of the Wasserstein distance normalized by (k−1);
    /// the normalization makes distances comparable across option counts.
    pub mean_wasserstein: f64,
    /// Mean of the raw (index-scale) distances, for reference.
    pub mean_wasserstein_raw: f64,
    /// Share of questions where the model's modal answer matches the human
    /// modal answer.
    pub mean_majority: f64,
    /// Questions contributing to the means.
    pub questions: usize,
    /// Argmax ties encountered while computing majority matches.
    pub ties: usize,
    /// Records whose distributions had unscored options.
    pub absent_flags: usize,
}
