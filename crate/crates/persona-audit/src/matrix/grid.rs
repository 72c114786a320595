//! Grid expansion: turning run axes into the deterministic list of prompt
//! jobs, plus the dry-run plan summary.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::data::MatrixData;
use super::render::render_persona_prompt;
use super::types::{
    DecodingParams, DemographicPriming, Group, Mode, PersonaSpec, Phrasing, PromptJob, PromptType,
    RoleAdoption, SurveyQuestion, TaskKind, TaskSpec,
};
use crate::error::{Error, Result};

/// The axes of one run: which groups, prompt types, and phrasings to cross,
/// and how many sampled responses each open-ended cell gets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub task: TaskKind,
    pub races: Vec<String>,
    pub genders: Vec<String>,
    pub roles: Vec<RoleAdoption>,
    pub primings: Vec<DemographicPriming>,
    pub phrasings: Vec<Phrasing>,
    /// Responses per open-ended cell. Name-primed cells split this across
    /// the surname list, so it must be divisible by the list length. Ignored
    /// for the survey task, which samples once per job.
    pub seeds_per_cell: u64,
    /// Added to every seed; lets reruns target fresh samples.
    #[serde(default)]
    pub seed_base: u64,
    /// Survey questions; must be non-empty for the survey task and empty
    /// otherwise.
    #[serde(default)]
    pub questions: Vec<SurveyQuestion>,
    #[serde(default)]
    pub decoding: DecodingParams,
}

impl GridSpec {
    /// The full default grid for a task: every bundled group (restricted to
    /// closed-ended groups for the survey task), all nine prompt types, both
    /// phrasings, 100 seeds per cell.
    pub fn full(task: TaskKind, data: &MatrixData, questions: Vec<SurveyQuestion>) -> Self {
        let closed = task.mode() == Mode::Closed;
        GridSpec {
            task,
            races: data
                .races()
                .iter()
                .filter(|r| !closed || r.closed_ended)
                .map(|r| r.slug.clone())
                .collect(),
            genders: data
                .genders()
                .iter()
                .filter(|g| !closed || g.closed_ended)
                .map(|g| g.slug.clone())
                .collect(),
            roles: RoleAdoption::ALL.to_vec(),
            primings: DemographicPriming::ALL.to_vec(),
            phrasings: Phrasing::ALL.to_vec(),
            seeds_per_cell: 100,
            seed_base: 0,
            questions,
            decoding: DecodingParams::default(),
        }
    }

    fn validate(&self, data: &MatrixData) -> Result<()> {
        for (axis, empty) in [
            ("races", self.races.is_empty()),
            ("genders", self.genders.is_empty()),
            ("roles", self.roles.is_empty()),
            ("primings", self.primings.is_empty()),
            ("phrasings", self.phrasings.is_empty()),
        ] {
            if empty {
                return Err(Error::Config(format!("empty axis: {axis}")));
            }
        }
        let closed = self.task.mode() == Mode::Closed;
        for slug in &self.races {
            let race = data.race(slug)?;
            if closed && !race.closed_ended {
                return Err(Error::Config(format!(
                    "race '{slug}' cannot be used for the survey task (no closed-ended descriptors)"
                )));
            }
            if self.primings.contains(&DemographicPriming::Name)
                && !closed
                && self.seeds_per_cell % race.surnames.len() as u64 != 0
            {
                return Err(Error::Config(format!(
                    "seeds_per_cell ({}) must be divisible by the surname list length ({}) of race '{slug}' for name priming",
                    self.seeds_per_cell,
                    race.surnames.len()
                )));
            }
        }
        for slug in &self.genders {
            let gender = data.gender(slug)?;
            if closed && !gender.closed_ended {
                return Err(Error::Config(format!(
                    "gender '{slug}' cannot be used for the survey task (no closed-ended descriptors)"
                )));
            }
        }
        if closed {
            if self.questions.is_empty() {
                return Err(Error::Config(
                    "the survey task needs at least one question".to_string(),
                ));
            }
            let mut ids = BTreeSet::new();
            for q in &self.questions {
                q.validate()?;
                if !ids.insert(q.id.clone()) {
                    return Err(Error::Config(format!("duplicate question id '{}'", q.id)));
                }
            }
        } else {
            if !self.questions.is_empty() {
                return Err(Error::Config(format!(
                    "task {} is open-ended but the config lists questions",
                    self.task
                )));
            }
            if self.seeds_per_cell == 0 {
                return Err(Error::Config("seeds_per_cell must be ≥ 1".to_string()));
            }
        }
        Ok(())
    }
}

/// Dry-run summary of a grid: how many distinct prompt cells (group × type ×
/// phrasing, with name-primed cells counted once per surname) and how many
/// jobs the run would issue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub task: TaskKind,
    pub groups: usize,
    pub prompt_types: usize,
    pub phrasings: usize,
    pub questions: usize,
    pub prompt_cells: usize,
    pub jobs: usize,
}

/// Expands a grid spec into concrete jobs. Order is deterministic: nested
/// loops over race, gender, role, priming, phrasing, name, question, seed —
/// lexicographic over the grid axes in their configured order.
pub fn expand_grid(data: &MatrixData, spec: &GridSpec) -> Result<Vec<PromptJob>> {
    spec.validate(data)?;
    let closed = spec.task.mode() == Mode::Closed;
    let mut jobs = Vec::new();
    for race_slug in &spec.races {
        let race = data.race(race_slug)?;
        for gender_slug in &spec.genders {
            for &role in &spec.roles {
                for &priming in &spec.primings {
                    for &phrasing in &spec.phrasings {
                        let names: Vec<Option<String>> =
                            if priming == DemographicPriming::Name {
                                race.surnames.iter().cloned().map(Some).collect()
                            } else {
                                vec![None]
                            };
                        let seeds_per_name = if closed {
                            1
                        } else {
                            spec.seeds_per_cell / names.len() as u64
                        };
                        for name in names {
                            let persona = PersonaSpec {
                                group: Group::new(race_slug, gender_slug),
                                prompt_type: PromptType::new(role, priming),
                                phrasing,
                                name,
                            };
                            let questions: Vec<Option<&SurveyQuestion>> = if closed {
                                spec.questions.iter().map(Some).collect()
                            } else {
                                vec![None]
                            };
                            for question in questions {
                                let task = match question {
                                    Some(q) => TaskSpec::survey(q.clone()),
                                    None => TaskSpec::open(spec.task)?,
                                };
                                let rendered = render_persona_prompt(&persona, &task, data)?;
                                for s in 0..seeds_per_name {
                                    let seed = spec.seed_base + s;
                                    let question_id = question.map(|q| q.id.clone());
                                    jobs.push(PromptJob {
                                        id: PromptJob::make_id(
                                            spec.task,
                                            &persona,
                                            question_id.as_deref(),
                                            seed,
                                        ),
                                        persona: persona.clone(),
                                        task: spec.task,
                                        question_id,
                                        prompt: rendered.prompt.clone(),
                                        seed,
                                        decoding: spec.decoding,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(jobs)
}

/// Computes the plan summary by expanding the grid and counting.
pub fn plan(data: &MatrixData, spec: &GridSpec) -> Result<PlanSummary> {
    let jobs = expand_grid(data, spec)?;
    let mut cells = BTreeSet::new();
    for job in &jobs {
        cells.insert((
            job.persona.group.clone(),
            job.persona.prompt_type,
            job.persona.phrasing,
            job.persona.name.clone(),
        ));
    }
    Ok(PlanSummary {
        task: spec.task,
        groups: spec.races.len() * spec.genders.len(),
        prompt_types: spec.roles.len() * spec.primings.len(),
        phrasings: spec.phrasings.len(),
        questions: spec.questions.len(),
        prompt_cells: cells.len(),
        jobs: jobs.len(),
    })
}
