//! Error type shared across the crate.
//!
//! Everything fallible in the library returns [`crate::Result`]. Variants are
//! grouped roughly by subsystem; the display strings are what operators see in
//! CLI output, so they carry enough context to act on (offending column names,
//! URLs, status codes, placeholder names) without requiring a debugger.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration file could not be parsed, or its contents are
    /// inconsistent (e.g. seeds per cell not divisible by the surname count).
    #[error("config error: {0}")]
    Config(String),

    /// A template referenced a placeholder with no descriptor value for the
    /// requested demographic group.
    #[error("no descriptor for placeholder {placeholder} ({detail})")]
    MissingDescriptor { placeholder: String, detail: String },

    /// The endpoint does not support a capability the pipeline needs
    /// (typically echo-mode log-probabilities).
    #[error("endpoint capability missing: {0}")]
    Capability(String),

    /// Transport-level failure after retries were exhausted.
    #[error("transport failure for {url} after {attempts} attempts: {detail}")]
    Transport {
        url: String,
        attempts: u32,
        detail: String,
    },

    /// Non-retryable HTTP error from the endpoint.
    #[error("HTTP {status} from {url}: {detail}")]
    Http {
        status: u16,
        url: String,
        detail: String,
    },

    /// Two records with the same job id but different payloads, a corrupt
    /// store line, or a manifest mismatch.
    #[error("store integrity error: {0}")]
    Integrity(String),

    /// Other store-level failure (missing directory, bad manifest, ...).
    #[error("store error: {0}")]
    Store(String),

    /// Input too degenerate for the requested computation (too few documents,
    /// fewer than two vectors, all options absent, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A comparison needs a reference corpus that is not in the store.
    #[error("missing reference corpus: {0}")]
    MissingReference(String),

    /// A design matrix could not be built (unseen factor level, empty data).
    #[error("design error: {0}")]
    Design(String),

    /// The design matrix is rank deficient; the named columns are involved.
    #[error("collinear design matrix, offending columns: {}", .0.join(", "))]
    Collinear(Vec<String>),

    /// A pipeline stage was invoked before its prerequisites ran.
    #[error("stage error: {0}")]
    Stage(String),

    /// Log-probability validation failed or could not complete.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    /// Bundled or user-supplied data files are malformed.
    #[error("data error: {0}")]
    Data(String),
}

pub type Result<T> = std::result::Result<T, Error>;
