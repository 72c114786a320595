//! Statistical analysis: design encoding, OLS regression, and disparity
//! summaries.
//!
//! Open-ended measures are regressed on the prompt-construction factors
//! (race, gender, role, priming, task, phrasing) via dummy coding against
//! fixed reference levels, mirroring how the per-cell metric tables are
//! built. Cross-model comparisons first pass through per-model min–max
//! normalization so that scale differences between models do not masquerade
//! as disparity differences.

mod design;
mod normalize;
mod ols;

pub use design::{encode_design, DesignMatrix, FactorSpec, Observation};
pub use normalize::{group_disparity_std, min_max_normalize, NormalizedSeries};
pub use ols::{ols_fit, stars, Coefficient, RegressionResult};
