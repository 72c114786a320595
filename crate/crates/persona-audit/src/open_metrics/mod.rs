//! Open-ended representation measures over cleaned response corpora.
//!
//! Four measures quantify how model responses differ across demographic
//! groups: marked words (weighted log-odds with an informative prior),
//! group-vs-rest classification accuracy, semantic diversity of response
//! embeddings, and the non-English share. A fifth family, stereotype-category
//! shares, tracks how often responses lean on a small set of loaded terms.
//!
//! Everything operates on immutable [`GroupCorpus`] values — one per
//! (demographic group, prompt type, phrasing) cell — so cells can be scored
//! independently and in parallel. Texts are expected to be the *redacted*
//! variants produced by preprocessing; the tokenizer additionally drops any
//! redaction markers so they never count as words.

mod classifier;
mod diversity;
mod log_odds;
mod stereotype;
mod tokenize;

pub use classifier::{classification_accuracy, CV_FOLDS, MIN_DOCS_PER_GROUP};
pub use diversity::{mean_pairwise_distance, non_english_rate, semantic_diversity};
pub use log_odds::{
    marked_terms, marked_word_count, marked_words, weighted_log_odds, MarkedWord,
    REFERENCE_GENDER, REFERENCE_RACE, SIGNIFICANCE_Z,
};
pub use stereotype::{
    bundled_lexica, parse_lexica, stereotype_share, stereotype_share_with, StereotypeCategory,
    StereotypeLexicon,
};
pub use tokenize::{token_counts, tokenize};

use serde::{Deserialize, Serialize};

use crate::matrix::{Group, Phrasing, PromptType};
use crate::{Error, Result};

/// All usable responses for one (group, prompt type, phrasing) cell.
///
/// `phrasing` is `None` for a corpus that pools both phrasings of the same
/// prompt type; lexical metrics are reported per phrasing and pooled.
/// `embeddings`, when present, are row-aligned with `texts` and unit-norm.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupCorpus {
    pub group: Group,
    pub prompt_type: PromptType,
    pub phrasing: Option<Phrasing>,
    pub texts: Vec<String>,
    pub embeddings: Option<Vec<Vec<f64>>>,
}

impl GroupCorpus {
    pub fn new(
        group: Group,
        prompt_type: PromptType,
        phrasing: Option<Phrasing>,
        texts: Vec<String>,
    ) -> Self {
        GroupCorpus {
            group,
            prompt_type,
            phrasing,
            texts,
            embeddings: None,
        }
    }

    pub fn with_embeddings(mut self, embeddings: Vec<Vec<f64>>) -> Self {
        self.embeddings = Some(embeddings);
        self
    }

    /// Human-readable cell label for error messages and report rows,
    /// e.g. `"hispanic-female / interview-name / v1"`.
    pub fn cell_id(&self) -> String {
        format!(
            "{} / {} / {}",
            self.group.id(),
            self.prompt_type.id(),
            phrasing_label(self.phrasing)
        )
    }

    /// Check the row-alignment and unit-norm invariants on embeddings.
    pub fn validate(&self) -> Result<()> {
        let Some(embeddings) = &self.embeddings else {
            return Ok(());
        };
        if embeddings.len() != self.texts.len() {
            return Err(Error::Data(format!(
                "corpus {}: {} embeddings for {} texts",
                self.cell_id(),
                embeddings.len(),
                self.texts.len()
            )));
        }
        let dim = embeddings.first().map(Vec::len).unwrap_or(0);
        for (row, vector) in embeddings.iter().enumerate() {
            if vector.len() != dim {
                return Err(Error::Data(format!(
                    "corpus {}: embedding row {row} has dimension {} but row 0 has {dim}",
                    self.cell_id(),
                    vector.len()
                )));
            }
            let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(Error::Data(format!(
                    "corpus {}: embedding row {row} has norm {norm:.8}, expected unit length",
                    self.cell_id()
                )));
            }
        }
        Ok(())
    }
}

pub(crate) fn phrasing_label(phrasing: Option<Phrasing>) -> &'static str {
    match phrasing {
        Some(p) => p.as_str(),
        None => "pooled",
    }
}
