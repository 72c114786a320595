//! Role-violation screening: refusal patterns and judge-verdict bookkeeping.

use crate::store::{ExclusionReason, RecordStatus, ResponseRecord, RoleViolation};

/// Verdict of the role-violation judge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JudgeVerdict {
    /// The text reads as a human in persona.
    Human,
    /// The text reveals the model (AI identity or refusal phrasing).
    Ai,
    /// The judge produced no parseable annotation even after a reprompt.
    Unresolved,
}

/// Surface patterns of outright refusals (matched case-insensitively).
/// Refusals are excluded with their own reason before the judge runs, so
/// the two exclusion causes stay distinguishable in reports.
const REFUSAL_PATTERNS: &[&str] = &[
    "i cannot fulfill",
    "i can't fulfill",
    "i cannot assist with",
    "i can't assist with",
    "i cannot comply",
    "i can't comply",
    "i am unable to fulfill",
    "i'm unable to fulfill",
    "i cannot provide a response",
    "i won't be able to help with",
];

/// True when the extracted text is an outright refusal.
pub fn is_refusal(text: &str) -> bool {
    let lower = text.to_lowercase();
    REFUSAL_PATTERNS.iter().any(|p| lower.contains(p))
}

/// Applies the role screen to a record.
///
/// `verdict = None` means no judge is configured: the record is retained and
/// marked [`RoleViolation::NotJudged`]. Records already excluded (e.g. as
/// refusals) keep their status; only the violation label is updated.
pub fn apply_role_screen(record: &mut ResponseRecord, verdict: Option<JudgeVerdict>) {
    let already_excluded = matches!(record.status, RecordStatus::Excluded { .. });
    match verdict {
        None => record.role_violation = RoleViolation::NotJudged,
        Some(JudgeVerdict::Human) => record.role_violation = RoleViolation::Human,
        Some(JudgeVerdict::Ai) => {
            record.role_violation = RoleViolation::Ai;
            if !already_excluded {
                record.status = RecordStatus::Excluded {
                    reason: ExclusionReason::AiIdentity,
                };
            }
        }
        Some(JudgeVerdict::Unresolved) => {
            record.role_violation = RoleViolation::JudgeUnresolved;
            if !already_excluded {
                record.status = RecordStatus::Excluded {
                    reason: ExclusionReason::JudgeUnresolved,
                };
            }
        }
    }
}
