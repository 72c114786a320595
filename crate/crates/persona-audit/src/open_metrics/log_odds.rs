//! Marked-word detection via weighted log-odds with an informative prior.
//!
//! For a token `w` with count `y_tw` in the target corpus (total `n_t`) and
//! `y_rw` in the reference corpus (total `n_r`), the prior pins each token at
//! its pooled frequency scaled to a total mass `a0`:
//!
//! ```text
//! alpha_w = a0 * (y_tw + y_rw) / (n_t + n_r)
//! delta_w = ln((y_tw + alpha_w) / (n_t + a0 - y_tw - alpha_w))
//!         - ln((y_rw + alpha_w) / (n_r + a0 - y_rw - alpha_w))
//! sigma2_w = 1/(y_tw + alpha_w) + 1/(y_rw + alpha_w)
//! z_w = delta_w / sqrt(sigma2_w)
//! ```
//!
//! A token is *marked* for the target when `z_w > 1.96`. Cell-level counts
//! treat White and male as the unmarked references: a token counts for group
//! (r, g) only when it is significant against the same-gender White corpus
//! *and* the same-race male corpus (whichever of the two applies — for a
//! single-axis group only the other axis is compared, and the White-male cell
//! is zero by definition).

use std::cmp::Ordering;
use std::collections::BTreeMap;

use log::warn;
use serde::Serialize;

use super::tokenize::token_counts;
use super::{phrasing_label, GroupCorpus};
use crate::matrix::{Group, Phrasing, PromptType};
use crate::{Error, Result};

/// Total prior mass spread over the combined vocabulary.
const PRIOR_MASS: f64 = 1000.0;

/// Two-sided 5% significance threshold on the z-score.
pub const SIGNIFICANCE_Z: f64 = 1.96;

/// The unmarked reference race; cells of this race are only compared along
/// the gender axis.
pub const REFERENCE_RACE: &str = "white";

/// The unmarked reference gender; cells of this gender are only compared
/// along the race axis.
pub const REFERENCE_GENDER: &str = "male";

/// A token that is significantly overrepresented in its cell against every
/// applicable reference corpus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkedWord {
    pub token: String,
    /// z-score versus the same-gender White corpus; `None` when the target's
    /// race is already the reference.
    pub z_race: Option<f64>,
    /// z-score versus the same-race male corpus; `None` when the target's
    /// gender is already the reference.
    pub z_gender: Option<f64>,
    /// Occurrences of the token in the target corpus.
    pub count: u64,
}

/// Per-token z-scores of `target` against `reference` over their combined
/// vocabulary. Corpora with no shared vocabulary are incomparable: that
/// returns an empty map with a warning rather than an error.
pub fn weighted_log_odds(
    target: &GroupCorpus,
    reference: &GroupCorpus,
) -> Result<BTreeMap<String, f64>> {
    for corpus in [target, reference] {
        if corpus.texts.is_empty() {
            return Err(Error::Degenerate(format!(
                "weighted log-odds needs non-empty corpora; {} has no documents",
                corpus.cell_id()
            )));
        }
    }
    let (y_t, n_t) = token_counts(&target.texts);
    let (y_r, n_r) = token_counts(&reference.texts);
    if !y_t.keys().any(|w| y_r.contains_key(w)) {
        warn!(
            "no shared vocabulary between {} and {}; no tokens scored",
            target.cell_id(),
            reference.cell_id()
        );
        return Ok(BTreeMap::new());
    }
    let (n_t, n_r) = (n_t as f64, n_r as f64);
    let mut scores = BTreeMap::new();
    let vocabulary: Vec<&String> = {
        let mut v: Vec<&String> = y_t.keys().collect();
        v.extend(y_r.keys().filter(|w| !y_t.contains_key(*w)));
        v
    };
    for word in vocabulary {
        let yt = y_t.get(word).copied().unwrap_or(0) as f64;
        let yr = y_r.get(word).copied().unwrap_or(0) as f64;
        let alpha = PRIOR_MASS * (yt + yr) / (n_t + n_r);
        let denom_t = n_t + PRIOR_MASS - yt - alpha;
        let denom_r = n_r + PRIOR_MASS - yr - alpha;
        if denom_t <= 0.0 || denom_r <= 0.0 {
            // Only reachable when a corpus is a single repeated token and the
            // prior concentrates all mass on it; no finite score exists.
            continue;
        }
        let delta = ((yt + alpha) / denom_t).ln() - ((yr + alpha) / denom_r).ln();
        let sigma2 = 1.0 / (yt + alpha) + 1.0 / (yr + alpha);
        scores.insert(word.clone(), delta / sigma2.sqrt());
    }
    Ok(scores)
}

/// Tokens significantly overrepresented in `target` relative to `reference`,
/// sorted by descending z-score (ties broken alphabetically).
pub fn marked_words(
    target: &GroupCorpus,
    reference: &GroupCorpus,
) -> Result<Vec<(String, f64)>> {
    let mut out: Vec<(String, f64)> = weighted_log_odds(target, reference)?
        .into_iter()
        .filter(|(_, z)| *z > SIGNIFICANCE_Z)
        .collect();
    out.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    Ok(out)
}

fn cell_name(group: &Group, prompt_type: PromptType, phrasing: Option<Phrasing>) -> String {
    format!(
        "{} / {} / {}",
        group.id(),
        prompt_type.id(),
        phrasing_label(phrasing)
    )
}

fn find_corpus<'a>(
    corpora: &'a [GroupCorpus],
    group: &Group,
    prompt_type: PromptType,
    phrasing: Option<Phrasing>,
) -> Option<&'a GroupCorpus> {
    corpora
        .iter()
        .find(|c| c.group == *group && c.prompt_type == prompt_type && c.phrasing == phrasing)
}

/// The marked-word set for one cell, filtered by the intersection rule
/// described in the module docs. Results are sorted by the binding
/// (smallest applicable) z-score, descending.
pub fn marked_terms(
    corpora: &[GroupCorpus],
    group: &Group,
    prompt_type: PromptType,
    phrasing: Option<Phrasing>,
) -> Result<Vec<MarkedWord>> {
    let race_unmarked = group.race == REFERENCE_RACE;
    let gender_unmarked = group.gender == REFERENCE_GENDER;
    if race_unmarked && gender_unmarked {
        return Ok(Vec::new());
    }
    let target = find_corpus(corpora, group, prompt_type, phrasing).ok_or_else(|| {
        Error::MissingReference(format!(
            "no corpus for target cell {}",
            cell_name(group, prompt_type, phrasing)
        ))
    })?;

    let against = |reference_group: Group| -> Result<BTreeMap<String, f64>> {
        let reference =
            find_corpus(corpora, &reference_group, prompt_type, phrasing).ok_or_else(|| {
                Error::MissingReference(format!(
                    "no reference corpus for cell {}",
                    cell_name(&reference_group, prompt_type, phrasing)
                ))
            })?;
        weighted_log_odds(target, reference)
    };

    let z_race = if race_unmarked {
        None
    } else {
        Some(against(Group::new(REFERENCE_RACE, group.gender.clone()))?)
    };
    let z_gender = if gender_unmarked {
        None
    } else {
        Some(against(Group::new(group.race.clone(), REFERENCE_GENDER))?)
    };

    let (counts, _) = token_counts(&target.texts);
    let mut out = Vec::new();
    for (token, &count) in &counts {
        let zr = z_race.as_ref().map(|m| m.get(token).copied());
        let zg = z_gender.as_ref().map(|m| m.get(token).copied());
        // Significant in *every* applicable comparison. A missing score (no
        // shared vocabulary with that reference) is not significant.
        let significant = |z: &Option<Option<f64>>| match z {
            None => true,
            Some(Some(z)) => *z > SIGNIFICANCE_Z,
            Some(None) => false,
        };
        if significant(&zr) && significant(&zg) {
            out.push(MarkedWord {
                token: token.clone(),
                z_race: zr.flatten(),
                z_gender: zg.flatten(),
                count,
            });
        }
    }
    let binding_z = |w: &MarkedWord| {
        [w.z_race, w.z_gender]
            .into_iter()
            .flatten()
            .fold(f64::INFINITY, f64::min)
    };
    out.sort_by(|a, b| {
        binding_z(b)
            .partial_cmp(&binding_z(a))
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.token.cmp(&b.token))
    });
    Ok(out)
}

/// Number of distinct marked word types for one cell.
pub fn marked_word_count(
    corpora: &[GroupCorpus],
    group: &Group,
    prompt_type: PromptType,
    phrasing: Option<Phrasing>,
) -> Result<usize> {
    Ok(marked_terms(corpora, group, prompt_type, phrasing)?.len())
}
