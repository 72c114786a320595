//! Embedding diversity and language-share measures.

use super::GroupCorpus;
use crate::{Error, Result};

/// Mean cosine distance (`1 - dot`) over all unordered pairs of unit vectors.
pub fn mean_pairwise_distance(embeddings: &[Vec<f64>]) -> Result<f64> {
    if embeddings.len() < 2 {
        return Err(Error::Degenerate(format!(
            "semantic diversity needs at least 2 embedding vectors, got {}",
            embeddings.len()
        )));
    }
    let dim = embeddings[0].len();
    for (row, vector) in embeddings.iter().enumerate() {
        if vector.len() != dim {
            return Err(Error::Data(format!(
                "embedding row {row} has dimension {}, row 0 has {dim}",
                vector.len()
            )));
        }
    }
    let n = embeddings.len();
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let dot: f64 = embeddings[i]
                .iter()
                .zip(&embeddings[j])
                .map(|(a, b)| a * b)
                .sum();
            sum += 1.0 - dot;
        }
    }
    Ok(sum / (n * (n - 1) / 2) as f64)
}

/// Semantic diversity of a cell: mean pairwise cosine distance of its
/// response embeddings.
pub fn semantic_diversity(corpus: &GroupCorpus) -> Result<f64> {
    corpus.validate()?;
    let embeddings = corpus.embeddings.as_ref().ok_or_else(|| {
        Error::Degenerate(format!("corpus {} has no embeddings", corpus.cell_id()))
    })?;
    mean_pairwise_distance(embeddings)
}

/// Share of records whose identified language is not English. An empty cell
/// has no non-English records, so the rate is 0.
pub fn non_english_rate<S: AsRef<str>>(languages: &[S]) -> f64 {
    if languages.is_empty() {
        return 0.0;
    }
    let non_english = languages.iter().filter(|l| l.as_ref() != "en").count();
    non_english as f64 / languages.len() as f64
}
