//! Store-level reduction to per-cell alignment rows.

use std::collections::BTreeMap;

use log::warn;

use super::{majority_match, to_distribution, wasserstein_1d, AlignmentCell, AnswerDistribution};
use crate::matrix::{GridSpec, Group, Mode, Phrasing, PromptType, SurveyQuestion};
use crate::store::{Filter, StatusKind, Store};
use crate::{Error, Result};

/// Per-cell alignment means over the survey grid.
///
/// Under Name priming the fan-out across surnames is averaged *first*, per
/// question, and the per-question values are then averaged across questions;
/// this keeps every question's weight equal regardless of how many names
/// answered it. Cells without a human reference distribution, and cells with
/// no usable records, are skipped with a warning. Results come back in grid
/// order, independent of the order jobs completed in.
pub fn aggregate_alignment(store: &Store, grid: &GridSpec) -> Result<Vec<AlignmentCell>> {
    if grid.task.mode() != Mode::Closed {
        return Err(Error::Stage(format!(
            "alignment aggregation applies to the survey task, not '{}'",
            grid.task
        )));
    }
    if grid.questions.is_empty() {
        return Err(Error::Stage(
            "alignment aggregation needs the grid's question list".to_string(),
        ));
    }

    // One pass over the usable records, bucketed by cell and question.
    type CellKey = (String, PromptType, Phrasing);
    let mut by_cell: BTreeMap<CellKey, BTreeMap<String, Vec<AnswerDistribution>>> = BTreeMap::new();
    let filter = Filter {
        task: Some(grid.task),
        status: Some(StatusKind::Ok),
        ..Filter::default()
    };
    for record in store.query(&filter) {
        let Some(logprobs) = &record.option_logprobs else {
            continue;
        };
        let key = (
            record.persona.group.id(),
            record.persona.prompt_type,
            record.persona.phrasing,
        );
        by_cell
            .entry(key)
            .or_default()
            .entry(logprobs.question_id.clone())
            .or_default()
            .push(to_distribution(logprobs)?);
    }

    let human_reference = |question: &SurveyQuestion, group: &Group| -> Option<AnswerDistribution> {
        question
            .human_distributions
            .get(&group.id())
            .map(|probs| AnswerDistribution {
                question_id: question.id.clone(),
                options: question.options.clone(),
                probs: probs.clone(),
                absent_options: 0,
            })
    };

    let mut cells = Vec::new();
    for race in &grid.races {
        for gender in &grid.genders {
            let group = Group::new(race.clone(), gender.clone());
            if grid
                .questions
                .iter()
                .any(|q| !q.human_distributions.contains_key(&group.id()))
            {
                warn!(
                    "group '{}' lacks a human distribution for at least one question; skipping its cells",
                    group.id()
                );
                continue;
            }
            for role in &grid.roles {
                for priming in &grid.primings {
                    let prompt_type = PromptType::new(*role, *priming);
                    for phrasing in &grid.phrasings {
                        let key = (group.id(), prompt_type, *phrasing);
                        let Some(per_question) = by_cell.get(&key) else {
                            warn!(
                                "no usable records for cell {} / {} / {}; skipping",
                                group.id(),
                                prompt_type.id(),
                                phrasing
                            );
                            continue;
                        };
                        let mut w1_values = Vec::new();
                        let mut w1_raw_values = Vec::new();
                        let mut majority_values = Vec::new();
                        let mut ties = 0usize;
                        let mut absent_flags = 0usize;
                        for question in &grid.questions {
                            let Some(answers) = per_question.get(&question.id) else {
                                continue;
                            };
                            let reference = human_reference(question, &group)
                                .expect("group coverage checked above");
                            // Names first: each question contributes one
                            // value, the mean over its fan-out.
                            let mut w1_sum = 0.0;
                            let mut w1_raw_sum = 0.0;
                            let mut majority_sum = 0.0;
                            for answer in answers {
                                let w = wasserstein_1d(answer, &reference)?;
                                w1_sum += w.normalized;
                                w1_raw_sum += w.raw;
                                let m = majority_match(answer, &reference);
                                majority_sum += if m.matched { 1.0 } else { 0.0 };
                                if m.tied {
                                    ties += 1;
                                }
                                if answer.absent_options > 0 {
                                    absent_flags += 1;
                                }
                            }
                            let n = answers.len() as f64;
                            w1_values.push(w1_sum / n);
                            w1_raw_values.push(w1_raw_sum / n);
                            majority_values.push(majority_sum / n);
                        }
                        if w1_values.is_empty() {
                            warn!(
                                "no answered questions for cell {} / {} / {}; skipping",
                                group.id(),
                                prompt_type.id(),
                                phrasing
                            );
                            continue;
                        }
                        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
                        cells.push(AlignmentCell {
                            group: group.clone(),
                            prompt_type,
                            phrasing: *phrasing,
                            mean_wasserstein: mean(&w1_values),
                            mean_wasserstein_raw: mean(&w1_raw_values),
                            mean_majority: mean(&majority_values),
                            questions: w1_values.len(),
                            ties,
                            absent_flags,
                        });
                    }
                }
            }
        }
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::OptionLogprobs;
    use crate::matrix::{
        DecodingParams, DemographicPriming, PersonaSpec, PromptJob, RoleAdoption, TaskKind,
    };
    use crate::store::ResponseRecord;
    use std::collections::BTreeMap;
    use tempfile::TempDir;

    fn question(id: &str, human_p0: f64) -> SurveyQuestion {
        SurveyQuestion {
            id: id.to_string(),
            text: format!("{id} text"),
            options: vec!["Agree".to_string(), "Disagree".to_string()],
            human_distributions: BTreeMap::from([(
                "white-male".to_string(),
                vec![human_p0, 1.0 - human_p0],
            )]),
        }
    }

    fn grid(questions: Vec<SurveyQuestion>, priming: DemographicPriming) -> GridSpec {
        GridSpec {
            task: TaskKind::SubjectiveQa,
            races: vec!["white".to_string()],
            genders: vec!["male".to_string()],
            roles: vec![RoleAdoption::Direct],
            primings: vec![priming],
            phrasings: vec![Phrasing::V1],
            seeds_per_cell: 1,
            seed_base: 0,
            questions,
            decoding: DecodingParams::default(),
        }
    }

    /// A record whose softmax lands exactly on (p0, 1 − p0).
    fn record(question_id: &str, priming: DemographicPriming, name: Option<&str>, p0: f64) -> ResponseRecord {
        let persona = PersonaSpec {
            group: Group::new("white", "male"),
            prompt_type: PromptType::new(RoleAdoption::Direct, priming),
            phrasing: Phrasing::V1,
            name: name.map(str::to_string),
        };
        let logprobs = OptionLogprobs {
            question_id: question_id.to_string(),
            options: vec!["Agree".to_string(), "Disagree".to_string()],
            // ln(0) is not finite; clamp the mass floor far below f64
            // resolution instead so p0 = 1.0 stays representable.
            logprobs: vec![Some(p0.max(1e-300).ln()), Some((1.0 - p0).max(1e-300).ln())],
            temperature: 1.0,
            first_token_match: false,
        };
        let job_id = PromptJob::make_id(
            TaskKind::SubjectiveQa,
            &persona,
            Some(question_id),
            0,
        );
        ResponseRecord::collected_options(job_id, persona, 0, logprobs, 1, 0, 0)
    }

    fn store_with(dir: &TempDir, records: Vec<ResponseRecord>) -> Store {
        let mut store = Store::open_or_create(dir.path(), "run-agg", "mock").unwrap();
        for r in records {
            store.persist(r).unwrap();
        }
        store
    }

    #[test]
    fn perfect_agreement_yields_zero_distance_and_full_match() {
        let dir = TempDir::new().unwrap();
        let g = grid(vec![question("Q1", 0.8)], DemographicPriming::Explicit);
        let store = store_with(&dir, vec![record("Q1", DemographicPriming::Explicit, None, 0.8)]);
        let cells = aggregate_alignment(&store, &g).unwrap();
        assert_eq!(cells.len(), 1);
        assert!(cells[0].mean_wasserstein.abs() < 1e-9);
        assert_eq!(cells[0].mean_majority, 1.0);
        assert_eq!(cells[0].questions, 1);
    }

    #[test]
    fn cross_question_mean_is_plain_arithmetic() {
        // Human mass fully on option 0; model distances are then exactly
        // 1 − p0 per question: 0.1 and 0.3 → mean 0.2.
        let dir = TempDir::new().unwrap();
        let g = grid(
            vec![question("Q1", 1.0), question("Q2", 1.0)],
            DemographicPriming::Explicit,
        );
        let store = store_with(
            &dir,
            vec![
                record("Q1", DemographicPriming::Explicit, None, 0.9),
                record("Q2", DemographicPriming::Explicit, None, 0.7),
            ],
        );
        let cells = aggregate_alignment(&store, &g).unwrap();
        assert_eq!(cells.len(), 1);
        assert!((cells[0].mean_wasserstein - 0.2).abs() < 1e-9);
        assert_eq!(cells[0].questions, 2);
    }

    #[test]
    fn name_fanout_averages_names_before_questions() {
        // Ten names with distances 0.0, 0.1, ..., 0.9 on Q1 → the question
        // contributes their mean 0.45; Q2 has one name at distance 0.05. The
        // cell mean is (0.45 + 0.05) / 2, *not* the mean of all 11 values.
        let dir = TempDir::new().unwrap();
        let g = grid(
            vec![question("Q1", 1.0), question("Q2", 1.0)],
            DemographicPriming::Name,
        );
        let mut records = Vec::new();
        for i in 0..10 {
            let d = i as f64 / 10.0;
            records.push(record("Q1", DemographicPriming::Name, Some(&format!("Name{i}")), 1.0 - d));
        }
        records.push(record("Q2", DemographicPriming::Name, Some("Name0"), 0.95));
        let store = store_with(&dir, records);
        let cells = aggregate_alignment(&store, &g).unwrap();
        assert_eq!(cells.len(), 1);
        let expected = (0.45 + 0.05) / 2.0;
        assert!(
            (cells[0].mean_wasserstein - expected).abs() < 1e-9,
            "got {}",
            cells[0].mean_wasserstein
        );
        let flat_mean: f64 = ((0..10).map(|t| t as f64 / 10.0).sum::<f64>() + 0.05) / 11.0;
        assert!((cells[0].mean_wasserstein - flat_mean).abs() > 1e-3);
    }

    #[test]
    fn completion_order_does_not_matter() {
        let g = grid(
            vec![question("Q1", 1.0), question("Q2", 1.0)],
            DemographicPriming::Explicit,
        );
        let records = vec![
            record("Q1", DemographicPriming::Explicit, None, 0.9),
            record("Q2", DemographicPriming::Explicit, None, 0.7),
        ];
        let dir_a = TempDir::new().unwrap();
        let store_a = store_with(&dir_a, records.clone());
        let dir_b = TempDir::new().unwrap();
        let store_b = store_with(&dir_b, records.into_iter().rev().collect());
        assert_eq!(
            aggregate_alignment(&store_a, &g).unwrap(),
            aggregate_alignment(&store_b, &g).unwrap()
        );
    }

    #[test]
    fn group_without_human_data_is_skipped() {
        let dir = TempDir::new().unwrap();
        let mut g = grid(vec![question("Q1", 0.5)], DemographicPriming::Explicit);
        g.races = vec!["white".to_string(), "black".to_string()];
        let store = store_with(&dir, vec![record("Q1", DemographicPriming::Explicit, None, 0.5)]);
        let cells = aggregate_alignment(&store, &g).unwrap();
        // Only white-male has human data; black-male is skipped, not an error.
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].group.id(), "white-male");
    }

    #[test]
    fn open_task_grids_are_rejected() {
        let dir = TempDir::new().unwrap();
        let store = store_with(&dir, vec![]);
        let mut g = grid(vec![question("Q1", 0.5)], DemographicPriming::Explicit);
        g.task = TaskKind::SelfDescription;
        assert!(aggregate_alignment(&store, &g).is_err());
    }
}
