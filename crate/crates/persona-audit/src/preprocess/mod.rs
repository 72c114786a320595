//! Preprocessing of raw responses: structured-field extraction, identity
//! redaction, role-violation screening, and language identification.
//!
//! Everything here is pure; the judge call itself lives in the gateway and
//! only its verdict is applied here. There is also a fuzz-style property
//! test for the redaction pipeline, since downstream lexical measures assume
//! zero surviving identity markers.

mod extract;
mod language;
mod redact;
mod violations;

pub use extract::{extract_structured_field, Extraction};
pub use language::{
    build_profile, bundled_profiles, identify_language, normalize as normalize_for_language_id,
    LanguageGuess, LanguageProfile, PROFILE_SIZE,
};
pub use redact::{redact_identity, RedactionLexicon, IDENTITY_MARKER};
pub use violations::{apply_role_screen, is_refusal, JudgeVerdict};
