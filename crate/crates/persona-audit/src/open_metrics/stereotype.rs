//! Stereotype-category lexicon shares.
//!
//! Each category carries a short word list and an applicability rule (which
//! demographic groups the pattern is attributed to). The metric is the share
//! of a cell's documents that contain at least one lexicon word, matched
//! case-insensitively on whole words via the shared tokenizer. Lists live in
//! `data/stereotype_lexica.toml` so they can be edited without recompiling.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::log_odds::REFERENCE_RACE;
use super::tokenize::tokenize;
use super::GroupCorpus;
use crate::matrix::Group;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StereotypeCategory {
    ImposedResilience,
    IdentityAsPrimaryFrame,
    ReligiosityConflation,
    GenderIdentityFocus,
}

impl StereotypeCategory {
    pub const ALL: [StereotypeCategory; 4] = [
        StereotypeCategory::ImposedResilience,
        StereotypeCategory::IdentityAsPrimaryFrame,
        StereotypeCategory::ReligiosityConflation,
        StereotypeCategory::GenderIdentityFocus,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StereotypeCategory::ImposedResilience => "imposed-resilience",
            StereotypeCategory::IdentityAsPrimaryFrame => "identity-as-primary-frame",
            StereotypeCategory::ReligiosityConflation => "religiosity-conflation",
            StereotypeCategory::GenderIdentityFocus => "gender-identity-focus",
        }
    }
}

impl fmt::Display for StereotypeCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One stereotype category: its word list and the groups it applies to.
/// Empty `races`/`genders` mean "no constraint on that axis"; `non_white`
/// restricts to every race except the reference.
#[derive(Debug, Clone, Deserialize)]
pub struct StereotypeLexicon {
    pub category: StereotypeCategory,
    pub words: Vec<String>,
    #[serde(default)]
    pub races: Vec<String>,
    #[serde(default)]
    pub genders: Vec<String>,
    #[serde(default)]
    pub non_white: bool,
}

impl StereotypeLexicon {
    pub fn applies_to(&self, group: &Group) -> bool {
        if self.non_white && group.race == REFERENCE_RACE {
            return false;
        }
        if !self.races.is_empty() && !self.races.iter().any(|r| *r == group.race) {
            return false;
        }
        if !self.genders.is_empty() && !self.genders.iter().any(|g| *g == group.gender) {
            return false;
        }
        true
    }
}

#[derive(Deserialize)]
struct LexiconFile {
    version: u32,
    lexicon: Vec<StereotypeLexicon>,
}

/// Parse a lexicon file. Every category must appear exactly once with a
/// non-empty word list.
pub fn parse_lexica(text: &str) -> Result<Vec<StereotypeLexicon>> {
    let file: LexiconFile =
        toml::from_str(text).map_err(|e| Error::Data(format!("stereotype lexica: {e}")))?;
    if file.version != 1 {
        return Err(Error::Data(format!(
            "stereotype lexica: unsupported version {}",
            file.version
        )));
    }
    for category in StereotypeCategory::ALL {
        let hits = file.lexicon.iter().filter(|l| l.category == category).count();
        if hits != 1 {
            return Err(Error::Data(format!(
                "stereotype lexica: category '{category}' appears {hits} times, expected once"
            )));
        }
    }
    for lexicon in &file.lexicon {
        if lexicon.words.is_empty() {
            return Err(Error::Data(format!(
                "stereotype lexica: category '{}' has an empty word list",
                lexicon.category
            )));
        }
    }
    Ok(file.lexicon)
}

/// The lexica bundled with the crate.
pub fn bundled_lexica() -> &'static [StereotypeLexicon] {
    static LEXICA: OnceLock<Vec<StereotypeLexicon>> = OnceLock::new();
    LEXICA.get_or_init(|| {
        parse_lexica(include_str!("../../data/stereotype_lexica.toml"))
            .expect("bundled stereotype lexica are valid")
    })
}

/// Share of documents in `corpus` containing at least one word of the given
/// bundled category.
pub fn stereotype_share(corpus: &GroupCorpus, category: StereotypeCategory) -> Result<f64> {
    let lexicon = bundled_lexica()
        .iter()
        .find(|l| l.category == category)
        .expect("bundled lexica cover every category");
    stereotype_share_with(corpus, lexicon)
}

/// Share of documents containing at least one word of `lexicon`.
pub fn stereotype_share_with(corpus: &GroupCorpus, lexicon: &StereotypeLexicon) -> Result<f64> {
    if !lexicon.applies_to(&corpus.group) {
        return Err(Error::Config(format!(
            "stereotype category '{}' does not apply to group '{}'",
            lexicon.category,
            corpus.group.id()
        )));
    }
    if corpus.texts.is_empty() {
        return Err(Error::Degenerate(format!(
            "stereotype share of empty corpus {}",
            corpus.cell_id()
        )));
    }
    let words: BTreeSet<String> = lexicon.words.iter().map(|w| w.to_lowercase()).collect();
    let hits = corpus
        .texts
        .iter()
        .filter(|text| tokenize(text).iter().any(|token| words.contains(token)))
        .count();
    Ok(hits as f64 / corpus.texts.len() as f64)
}
