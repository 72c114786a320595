//! Per-model normalization and group-disparity summaries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// A per-model min–max normalized series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedSeries {
    pub values: Vec<f64>,
    /// True when the raw series was constant (or empty) and every output was
    /// forced to zero.
    pub degenerate: bool,
}

/// Min–max normalize each model's series to `[0, 1]` independently, so
/// models with different raw scales become comparable. A constant series has
/// no spread to normalize by; it maps to all zeros and is flagged.
pub fn min_max_normalize(
    by_model: &BTreeMap<String, Vec<f64>>,
) -> BTreeMap<String, NormalizedSeries> {
    by_model
        .iter()
        .map(|(model, values)| {
            let min = values.iter().copied().fold(f64::INFINITY, f64::min);
            let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let series = if values.is_empty() || max <= min {
                NormalizedSeries {
                    values: vec![0.0; values.len()],
                    degenerate: true,
                }
            } else {
                NormalizedSeries {
                    values: values.iter().map(|v| (v - min) / (max - min)).collect(),
                    degenerate: false,
                }
            };
            (model.clone(), series)
        })
        .collect()
}

/// Population standard deviation of per-group means within one cell.
///
/// Returns `None` (with a warning) when fewer than two groups are present,
/// since a single group has no disparity to measure.
pub fn group_disparity_std(by_group: &BTreeMap<String, f64>) -> Option<f64> {
    if by_group.len() < 2 {
        log::warn!(
            "disparity cell has {} group(s); need at least 2, skipping",
            by_group.len()
        );
        return None;
    }
    Some(population_std(by_group.values().copied()))
}

fn population_std(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    (values.map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}
