//! The stored record shape: one line per collected response.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::OptionLogprobs;
use crate::matrix::{PersonaSpec, TaskKind};

/// Verdict of the role-violation screen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleViolation {
    /// The response stays in persona.
    Human,
    /// The response reveals the model (AI self-identification or refusal).
    Ai,
    /// The judge never produced a parseable annotation.
    JudgeUnresolved,
    /// Screening has not run (fresh record, or survey task).
    NotJudged,
}

/// Machine-readable reason a record was excluded from analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExclusionReason {
    Refusal,
    AiIdentity,
    ExtractionFailure,
    JudgeUnresolved,
}

/// Terminal status of a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RecordStatus {
    /// Collected successfully and (if preprocessed) kept for analysis.
    Ok,
    /// Collection failed after retries; the reason is the final error.
    Failed { reason: String },
    /// Collected, but preprocessing removed it from analysis.
    Excluded { reason: ExclusionReason },
}

impl RecordStatus {
    pub fn kind(&self) -> StatusKind {
        match self {
            RecordStatus::Ok => StatusKind::Ok,
            RecordStatus::Failed { .. } => StatusKind::Failed,
            RecordStatus::Excluded { .. } => StatusKind::Excluded,
        }
    }
}

/// Status discriminant, used in query filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatusKind {
    Ok,
    Failed,
    Excluded,
}

/// One collected response with its preprocessing annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub job_id: String,
    pub persona: PersonaSpec,
    pub task: TaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_id: Option<String>,
    pub seed: u64,
    /// Verbatim assistant message (open-ended tasks).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_text: Option<String>,
    /// Task field pulled out of the JSON response; present iff extraction
    /// succeeded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extracted: Option<String>,
    /// Username metadata from social-media-bio responses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub username: Option<String>,
    /// True when no parseable JSON object was found and the full trimmed
    /// response was used as the extracted text.
    #[serde(default)]
    pub extraction_fallback: bool,
    /// Extracted text with persona identity markers replaced; present iff
    /// extraction succeeded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub redacted: Option<String>,
    /// Scored answer options (survey task).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub option_logprobs: Option<OptionLogprobs>,
    pub role_violation: RoleViolation,
    /// ISO 639-1 code of the redacted text, set by preprocessing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
    pub status: RecordStatus,
    /// Attempts the gateway needed (1 = first try).
    #[serde(default)]
    pub attempts: u32,
    pub created_unix_ms: u64,
    #[serde(default)]
    pub latency_ms: u64,
}

impl ResponseRecord {
    /// A fresh record for a successfully collected open-ended response.
    pub fn collected_text(
        job_id: String,
        persona: PersonaSpec,
        task: TaskKind,
        seed: u64,
        raw_text: String,
        attempts: u32,
        created_unix_ms: u64,
        latency_ms: u64,
    ) -> Self {
        ResponseRecord {
            job_id,
            persona,
            task,
            question_id: None,
            seed,
            raw_text: Some(raw_text),
            extracted: None,
            username: None,
            extraction_fallback: false,
            redacted: None,
            option_logprobs: None,
            role_violation: RoleViolation::NotJudged,
            language: None,
            status: RecordStatus::Ok,
            attempts,
            created_unix_ms,
            latency_ms,
        }
    }

    /// A fresh record for scored survey options.
    pub fn collected_options(
        job_id: String,
        persona: PersonaSpec,
        seed: u64,
        logprobs: OptionLogprobs,
        attempts: u32,
        created_unix_ms: u64,
        latency_ms: u64,
    ) -> Self {
        ResponseRecord {
            job_id,
            persona,
            task: TaskKind::SubjectiveQa,
            question_id: Some(logprobs.question_id.clone()),
            seed,
            raw_text: None,
            extracted: None,
            username: None,
            extraction_fallback: false,
            redacted: None,
            option_logprobs: Some(logprobs),
            role_violation: RoleViolation::NotJudged,
            language: None,
            status: RecordStatus::Ok,
            attempts,
            created_unix_ms,
            latency_ms,
        }
    }

    /// A record for a job that failed terminally.
    pub fn failed(
        job_id: String,
        persona: PersonaSpec,
        task: TaskKind,
        question_id: Option<String>,
        seed: u64,
        reason: String,
        attempts: u32,
        created_unix_ms: u64,
    ) -> Self {
        ResponseRecord {
            job_id,
            persona,
            task,
            question_id,
            seed,
            raw_text: None,
            extracted: None,
            username: None,
            extraction_fallback: false,
            redacted: None,
            option_logprobs: None,
            role_violation: RoleViolation::NotJudged,
            language: None,
            status: RecordStatus::Failed { reason },
            attempts,
            created_unix_ms,
            latency_ms: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.extracted.is_some() != self.redacted.is_some() {
            return Err(Error::Integrity(format!(
                "record {}: redacted text must be present exactly when extraction succeeded",
                self.job_id
            )));
        }
        if let Some(ol) = &self.option_logprobs {
            ol.validate()?;
            if self.question_id.as_deref() != Some(ol.question_id.as_str()) {
                return Err(Error::Integrity(format!(
                    "record {}: question id mismatch with scored options",
                    self.job_id
                )));
            }
        }
        Ok(())
    }
}
