//! Dummy-coded design matrices for the disparity regressions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One categorical factor: its declared levels and the reference level that
/// is absorbed into the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSpec {
    pub name: String,
    pub reference: String,
    /// All levels, including the reference; indicator columns follow this
    /// order (minus the reference).
    pub levels: Vec<String>,
}

impl FactorSpec {
    pub fn new(name: &str, reference: &str, levels: &[&str]) -> Self {
        FactorSpec {
            name: name.to_string(),
            reference: reference.to_string(),
            levels: levels.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.levels.contains(&self.reference) {
            return Err(Error::Design(format!(
                "factor '{}': reference level '{}' is not among its levels",
                self.name, self.reference
            )));
        }
        Ok(())
    }
}

/// One regression observation: a labeled cell with its factor levels and the
/// response value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub label: String,
    /// Factor name → level.
    pub levels: BTreeMap<String, String>,
    pub response: f64,
}

/// A fully materialized design matrix with named rows and columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub row_labels: Vec<String>,
    pub column_labels: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub response: Vec<f64>,
}

impl DesignMatrix {
    pub fn validate(&self) -> Result<()> {
        if self.rows.is_empty() {
            return Err(Error::Design("design matrix has no rows".to_string()));
        }
        if self.rows.len() != self.response.len() || self.rows.len() != self.row_labels.len() {
            return Err(Error::Design(format!(
                "design matrix misaligned: {} rows, {} responses, {} labels",
                self.rows.len(),
                self.response.len(),
                self.row_labels.len()
            )));
        }
        for (label, row) in self.row_labels.iter().zip(&self.rows) {
            if row.len() != self.column_labels.len() {
                return Err(Error::Design(format!(
                    "row '{label}' has {} values for {} columns",
                    row.len(),
                    self.column_labels.len()
                )));
            }
        }
        Ok(())
    }
}

/// Dummy-code the observations: an intercept plus one indicator column per
/// non-reference level of each factor, columns in declared order.
pub fn encode_design(
    observations: &[Observation],
    factors: &[FactorSpec],
) -> Result<DesignMatrix> {
    if observations.is_empty() {
        return Err(Error::Design("no observations to encode".to_string()));
    }
    let mut column_labels = vec!["intercept".to_string()];
    for factor in factors {
        factor.validate()?;
        for level in &factor.levels {
            if *level != factor.reference {
                column_labels.push(format!("{}={level}", factor.name));
            }
        }
    }
    let mut rows = Vec::with_capacity(observations.len());
    let mut row_labels = Vec::with_capacity(observations.len());
    let mut response = Vec::with_capacity(observations.len());
    for obs in observations {
        let mut row = vec![1.0];
        for factor in factors {
            let level = obs.levels.get(&factor.name).ok_or_else(|| {
                Error::Design(format!(
                    "observation '{}' is missing factor '{}'",
                    obs.label, factor.name
                ))
            })?;
            if !factor.levels.contains(level) {
                return Err(Error::Design(format!(
                    "observation '{}': unseen level '{level}' for factor '{}' \
                     (declared: {})",
                    obs.label,
                    factor.name,
                    factor.levels.join(", ")
                )));
            }
            for declared in &factor.levels {
                if *declared != factor.reference {
                    row.push(if declared == level { 1.0 } else { 0.0 });
                }
            }
        }
        rows.push(row);
        row_labels.push(obs.label.clone());
        response.push(obs.response);
    }
    let design = DesignMatrix {
        row_labels,
        column_labels,
        rows,
        response,
    };
    design.validate()?;
    Ok(design)
}
