//! The prompt matrix: demographic groups, role-adoption and priming
//! strategies, template rendering, and grid expansion.
//!
//! Everything here is pure and stateless; the tables live in versioned data
//! files (bundled copies under `data/`) so the demographic axes can be
//! extended without code changes.

mod data;
mod grid;
mod render;
mod types;

pub use data::{
    DescriptorValue, GenderEntry, Lists, MatrixData, RaceEntry, Slot, TaskStrings, TemplateCell,
};
pub use grid::{expand_grid, plan, GridSpec, PlanSummary};
pub use render::{render_persona_prompt, render_question, Rendered};
pub use types::{
    DecodingParams, DemographicPriming, Group, Mode, PersonaSpec, Phrasing, PromptJob, PromptType,
    RoleAdoption, SurveyQuestion, TaskKind, TaskSpec,
};
