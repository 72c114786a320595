//! Character-trigram language identification.
//!
//! A rank-order profile of the most frequent character trigrams is built per
//! language from seed corpora (`data/lang_seed/*.txt`) and compared to the
//! text's own profile with the classic out-of-place distance. Exactly one
//! code is returned for any input — code-mixed text gets the single best
//! match, never a set. The bundled profiles ship pre-built in
//! `data/lang_profiles.json`; regenerate with
//! `cargo run --example regen_lang_profiles` after touching the seeds.

use std::collections::HashMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::redact::IDENTITY_MARKER;

/// Number of top trigrams kept per profile.
pub const PROFILE_SIZE: usize = 300;

const BUNDLED_PROFILES: &str = include_str!("../../data/lang_profiles.json");

/// A language's ranked trigram profile. Order encodes rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageProfile {
    /// ISO 639-1 code.
    pub code: String,
    pub trigrams: Vec<String>,
}

/// Identification result.
#[derive(Debug, Clone, PartialEq)]
pub struct LanguageGuess {
    pub code: String,
    /// Set when the text was too short to say anything (fewer than 3
    /// alphabetic characters) and the English default was returned.
    pub low_confidence: bool,
}

/// The six bundled profiles (de, en, es, fr, it, pt), sorted by code.
pub fn bundled_profiles() -> &'static [LanguageProfile] {
    static PROFILES: OnceLock<Vec<LanguageProfile>> = OnceLock::new();
    PROFILES.get_or_init(|| {
        serde_json::from_str(BUNDLED_PROFILES).expect("bundled language profiles must parse")
    })
}

/// Lowercases, maps non-alphabetic characters to spaces, collapses runs, and
/// trims. The result is what trigrams are drawn from (with one space of
/// padding on each side).
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut last_space = true;
    for c in text.chars() {
        if c.is_alphabetic() {
            out.extend(c.to_lowercase());
            last_space = false;
        } else if !last_space {
            out.push(' ');
            last_space = true;
        }
    }
    while out.ends_with(' ') {
        out.pop();
    }
    out
}

fn trigram_counts(normalized: &str) -> HashMap<String, usize> {
    let mut counts = HashMap::new();
    if normalized.is_empty() {
        return counts;
    }
    let padded: Vec<char> = format!(" {normalized} ").chars().collect();
    for window in padded.windows(3) {
        let gram: String = window.iter().collect();
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Ranks trigrams by frequency (ties broken lexicographically) and keeps the
/// top [`PROFILE_SIZE`].
fn ranked_trigrams(normalized: &str, limit: usize) -> Vec<String> {
    let counts = trigram_counts(normalized);
    let mut entries: Vec<(String, usize)> = counts.into_iter().collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    entries.into_iter().take(limit).map(|(g, _)| g).collect()
}

/// Builds a language profile from a seed corpus.
pub fn build_profile(code: &str, corpus: &str) -> LanguageProfile {
    LanguageProfile {
        code: code.to_string(),
        trigrams: ranked_trigrams(&normalize(corpus), PROFILE_SIZE),
    }
}

/// Out-of-place distance between a text's ranked trigrams and a language
/// profile; missing trigrams cost the maximum penalty.
fn out_of_place(text_ranks: &[String], profile: &LanguageProfile) -> u64 {
    let position: HashMap<&str, usize> = profile
        .trigrams
        .iter()
        .enumerate()
        .map(|(i, g)| (g.as_str(), i))
        .collect();
    let max_penalty = PROFILE_SIZE as u64;
    text_ranks
        .iter()
        .enumerate()
        .map(|(i, gram)| match position.get(gram.as_str()) {
            Some(&j) => (i as i64 - j as i64).unsigned_abs(),
            None => max_penalty,
        })
        .sum()
}

/// Identifies the single most probable language of `text`.
///
/// Redaction markers are stripped first so they cannot skew the profile.
/// Texts with fewer than 3 alphabetic characters default to English with
/// `low_confidence` set. Ties go to the lexicographically smallest code, so
/// the result is deterministic.
pub fn identify_language(text: &str, profiles: &[LanguageProfile]) -> LanguageGuess {
    let stripped = text.replace(IDENTITY_MARKER, " ");
    let normalized = normalize(&stripped);
    let alphabetic = normalized.chars().filter(|c| c.is_alphabetic()).count();
    if alphabetic < 3 || profiles.is_empty() {
        return LanguageGuess {
            code: "en".to_string(),
            low_confidence: true,
        };
    }
    let text_ranks = ranked_trigrams(&normalized, PROFILE_SIZE);
    let mut best: Option<(u64, &str)> = None;
    for profile in profiles {
        let d = out_of_place(&text_ranks, profile);
        let better = match best {
            None => true,
            Some((bd, bc)) => d < bd || (d == bd && profile.code.as_str() < bc),
        };
        if better {
            best = Some((d, &profile.code));
        }
    }
    LanguageGuess {
        code: best.expect("profiles non-empty").1.to_string(),
        low_confidence: false,
    }
}
