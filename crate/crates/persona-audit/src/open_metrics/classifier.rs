//! Group-vs-rest linear classifier accuracy.
//!
//! For each demographic group we train a linear max-margin classifier (hinge
//! loss with L2 regularization, optimized by Pegasos-style stochastic
//! subgradient descent) on bag-of-words term-frequency features, and score it
//! with stratified 5-fold cross-validation on the group-vs-rest task. High
//! accuracy means the groups' anonymized responses remain easy to tell apart.
//!
//! Determinism: documents are canonically sorted within each group before
//! fold assignment and the per-epoch shuffles use fixed seeds, so results are
//! invariant under input document order.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tokenize::tokenize;
use super::GroupCorpus;
use crate::{Error, Result};

/// Cross-validation folds.
pub const CV_FOLDS: usize = 5;

/// Minimum documents per group; guarantees every fold holds at least
/// `MIN_DOCS_PER_GROUP / CV_FOLDS` documents of each class.
pub const MIN_DOCS_PER_GROUP: usize = 20;

/// Passes over the training set per classifier.
const EPOCHS: usize = 20;

const SHUFFLE_SEED: u64 = 0x9d2c_5680;

/// Sparse document vector: (vocabulary index, weight) pairs.
type SparseVec = Vec<(usize, f64)>;

/// Stratified cross-validated accuracy of the group-vs-rest classifier, per
/// group id. All corpora must belong to the same prompt type and phrasing.
pub fn classification_accuracy(corpora: &[GroupCorpus]) -> Result<BTreeMap<String, f64>> {
    if corpora.len() < 2 {
        return Err(Error::Degenerate(format!(
            "classification accuracy needs at least two groups, got {}",
            corpora.len()
        )));
    }
    let key = (corpora[0].prompt_type, corpora[0].phrasing);
    let mut group_ids = Vec::new();
    for corpus in corpora {
        if (corpus.prompt_type, corpus.phrasing) != key {
            return Err(Error::Config(format!(
                "classification corpora must share one cell type; found {} next to {}",
                corpus.cell_id(),
                corpora[0].cell_id()
            )));
        }
        if group_ids.contains(&corpus.group.id()) {
            return Err(Error::Config(format!(
                "duplicate corpus for group '{}'",
                corpus.group.id()
            )));
        }
        if corpus.texts.len() < MIN_DOCS_PER_GROUP {
            return Err(Error::Degenerate(format!(
                "group '{}' has {} documents; classification needs at least {} \
                 so every one of the {} folds sees the class",
                corpus.group.id(),
                corpus.texts.len(),
                MIN_DOCS_PER_GROUP,
                CV_FOLDS
            )));
        }
        group_ids.push(corpus.group.id());
    }

    // Canonical document order: groups sorted by id, texts sorted within each
    // group, folds assigned round-robin. This makes the whole computation a
    // pure function of the corpus *contents*.
    let mut order: Vec<usize> = (0..corpora.len()).collect();
    order.sort_by(|&a, &b| corpora[a].group.id().cmp(&corpora[b].group.id()));

    struct Doc {
        class: usize,
        fold: usize,
        tokens: Vec<String>,
    }
    let mut docs = Vec::new();
    let mut classes = Vec::new();
    for (class, &ci) in order.iter().enumerate() {
        classes.push(corpora[ci].group.id());
        let mut texts: Vec<&String> = corpora[ci].texts.iter().collect();
        texts.sort();
        for (k, text) in texts.iter().enumerate() {
            docs.push(Doc {
                class,
                fold: k % CV_FOLDS,
                tokens: tokenize(text),
            });
        }
    }

    let mut correct = vec![0usize; classes.len()];
    for fold in 0..CV_FOLDS {
        // Vocabulary from the training folds only.
        let mut vocab: BTreeMap<&str, usize> = BTreeMap::new();
        for doc in docs.iter().filter(|d| d.fold != fold) {
            for token in &doc.tokens {
                let next = vocab.len();
                vocab.entry(token).or_insert(next);
            }
        }
        let featurize = |doc: &Doc| -> SparseVec {
            let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
            for token in &doc.tokens {
                if let Some(&idx) = vocab.get(token.as_str()) {
                    *counts.entry(idx).or_insert(0.0) += 1.0;
                }
            }
            let norm = counts.values().map(|v| v * v).sum::<f64>().sqrt();
            counts
                .into_iter()
                .map(|(idx, v)| (idx, if norm > 0.0 { v / norm } else { 0.0 }))
                .collect()
        };
        let train: Vec<(usize, SparseVec)> = docs
            .iter()
            .filter(|d| d.fold != fold)
            .map(|d| (d.class, featurize(d)))
            .collect();
        let test: Vec<(usize, SparseVec)> = docs
            .iter()
            .filter(|d| d.fold == fold)
            .map(|d| (d.class, featurize(d)))
            .collect();

        let lambda = 1.0 / train.len() as f64;
        for (class, _) in classes.iter().enumerate() {
            let labels: Vec<f64> = train
                .iter()
                .map(|(c, _)| if *c == class { 1.0 } else { -1.0 })
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(
                SHUFFLE_SEED ^ ((fold as u64) << 32) ^ class as u64,
            );
            let weights = train_hinge(&train, &labels, vocab.len(), lambda, &mut rng);
            for (true_class, x) in &test {
                let predicted_in = sparse_dot(&weights, x) > 0.0;
                if predicted_in == (*true_class == class) {
                    correct[class] += 1;
                }
            }
        }
    }

    let total = docs.len() as f64;
    Ok(classes
        .into_iter()
        .zip(correct)
        .map(|(id, c)| (id, c as f64 / total))
        .collect())
}

fn sparse_dot(dense: &[f64], sparse: &SparseVec) -> f64 {
    sparse.iter().map(|&(i, v)| dense[i] * v).sum()
}

/// Pegasos: at step `t`, shrink by `(1 - 1/t)` and, on a margin violation,
/// add `eta_t * y * x` with `eta_t = 1 / (lambda * t)`. The weight vector is
/// kept as `scale * base` so the shrink is O(1) per step.
fn train_hinge(
    train: &[(usize, SparseVec)],
    labels: &[f64],
    dim: usize,
    lambda: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let mut base = vec![0.0f64; dim];
    let mut scale = 1.0f64;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut t = 0u64;
    for _ in 0..EPOCHS {
        order.shuffle(rng);
        for &i in &order {
            t += 1;
            let x = &train[i].1;
            let margin = labels[i] * scale * sparse_dot(&base, x);
            if t > 1 {
                // At t = 1 the vector is still zero and the shrink factor is
                // (1 - 1/1) = 0, a no-op on the zero vector; skipping it keeps
                // the scale representation finite.
                scale *= 1.0 - 1.0 / t as f64;
            }
            if margin < 1.0 {
                let coeff = labels[i] / (lambda * t as f64 * scale);
                for &(j, v) in x {
                    base[j] += coeff * v;
                }
            }
        }
    }
    base.iter().map(|v| v * scale).collect()
}
