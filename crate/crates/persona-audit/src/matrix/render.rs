//! Template rendering: turning a (persona, task) pair into the exact prompt
//! text sent to the model.

use super::data::{MatrixData, Slot};
use super::types::{Mode, PersonaSpec, RoleAdoption, SurveyQuestion, TaskSpec};
use crate::error::{Error, Result};

/// A rendered prompt plus the descriptor substitutions that produced it (in
/// order of appearance). The substitutions feed the identity-redaction
/// lexicon downstream.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub prompt: String,
    pub substitutions: Vec<(Slot, String)>,
}

/// Renders a survey question for splicing into the `[QUESTION]` placeholder:
/// the question text followed by the option list.
pub fn render_question(question: &SurveyQuestion) -> String {
    format!("{} Options: {}.", question.text, question.options.join("; "))
}

/// Placeholders resolved by the scanning pass, longest first so that `[R]`
/// never shadows `[R_list1]` at the same position.
const SCAN_SLOTS: [Slot; 12] = [
    Slot::RList1,
    Slot::RList2,
    Slot::GList1,
    Slot::GList2,
    Slot::NmList,
    Slot::G1,
    Slot::G2,
    Slot::P1,
    Slot::P2,
    Slot::P3,
    Slot::P4,
    Slot::RExplicit,
];

const QUESTION_TOKEN: &str = "[QUESTION]";

/// Renders the prompt for a persona/task pair. Rendering is pure: identical
/// inputs yield byte-identical output.
///
/// The template cell is selected by the persona's prompt type and phrasing;
/// free-text tasks use the open variant, the survey task the closed variant
/// (which carries the "who lives in the U.S." fragments). `[TASK]` is spliced
/// first, so task strings may themselves contain pronoun and `[QUESTION]`
/// placeholders; third-person cells receive the third-person task string.
pub fn render_persona_prompt(
    persona: &PersonaSpec,
    task: &TaskSpec,
    data: &MatrixData,
) -> Result<Rendered> {
    persona.validate()?;
    task.validate()?;
    let mode = task.kind.mode();

    // Groups without closed-ended descriptors cannot appear in survey
    // prompts at all, even in cells whose template carries no demographic
    // placeholder (third-person v2).
    let race = data.race(&persona.group.race)?;
    let gender = data.gender(&persona.group.gender)?;
    if mode == Mode::Closed {
        if !race.closed_ended {
            return Err(Error::MissingDescriptor {
                placeholder: Slot::RExplicit.placeholder().to_string(),
                detail: format!("race '{}' is not available for closed-ended tasks", race.slug),
            });
        }
        if !gender.closed_ended {
            return Err(Error::MissingDescriptor {
                placeholder: Slot::G1.placeholder().to_string(),
                detail: format!(
                    "gender '{}' is not available for closed-ended tasks",
                    gender.slug
                ),
            });
        }
    }

    let cell = data.template(
        persona.prompt_type.role,
        persona.prompt_type.priming,
        persona.phrasing,
    );
    let template = match mode {
        Mode::Open => &cell.open,
        Mode::Closed => &cell.closed,
    };
    let task_strings = data.task(task.kind);
    let task_text = match persona.prompt_type.role {
        RoleAdoption::ThirdPerson => &task_strings.third_person,
        _ => &task_strings.second_person,
    };
    let text = template.replace("[TASK]", task_text);

    let question_text = task.question.as_ref().map(render_question);

    let mut prompt = String::with_capacity(text.len() + 128);
    let mut substitutions = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    'outer: while i < bytes.len() {
        if bytes[i] == b'[' {
            let rest = &text[i..];
            if rest.starts_with(QUESTION_TOKEN) {
                let question = question_text.as_deref().ok_or_else(|| {
                    Error::Config("template contains [QUESTION] but the task has none".to_string())
                })?;
                // Spliced verbatim, not re-scanned: question text is data,
                // not template.
                prompt.push_str(question);
                i += QUESTION_TOKEN.len();
                continue;
            }
            for slot in SCAN_SLOTS {
                let token = slot.placeholder();
                if rest.starts_with(token) {
                    let value = if slot == Slot::NmList {
                        // The persona's concrete surname, validated present
                        // by persona.validate() for name-primed cells.
                        persona
                            .name
                            .clone()
                            .ok_or_else(|| Error::MissingDescriptor {
                                placeholder: token.to_string(),
                                detail: "template needs a name but the persona has none"
                                    .to_string(),
                            })?
                    } else {
                        data.descriptor_lookup(
                            Some(&persona.group.race),
                            Some(&persona.group.gender),
                            slot,
                            mode,
                        )?
                        .into_single()?
                    };
                    prompt.push_str(&value);
                    substitutions.push((slot, value));
                    i += token.len();
                    continue 'outer;
                }
            }
        }
        // Advance by one full character (placeholders are ASCII, content may
        // not be).
        let ch = text[i..].chars().next().expect("in-bounds char");
        prompt.push(ch);
        i += ch.len_utf8();
    }

    Ok(Rendered {
        prompt,
        substitutions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::types::{
        DemographicPriming, Group, Phrasing, PromptType, TaskKind,
    };
    use std::collections::BTreeMap;

    fn persona(
        race: &str,
        gender: &str,
        role: RoleAdoption,
        priming: DemographicPriming,
        phrasing: Phrasing,
        name: Option<&str>,
    ) -> PersonaSpec {
        PersonaSpec {
            group: Group::new(race, gender),
            prompt_type: PromptType::new(role, priming),
            phrasing,
            name: name.map(str::to_string),
        }
    }

    fn sample_question() -> SurveyQuestion {
        SurveyQuestion {
            id: "Q1".to_string(),
            text: "How much, if at all, do you worry about the weather?".to_string(),
            options: vec![
                "A lot".to_string(),
                "Some".to_string(),
                "Not much".to_string(),
            ],
            human_distributions: BTreeMap::new(),
        }
    }

    #[test]
    fn direct_explicit_v1_self_description_is_exact() {
        let data = MatrixData::bundled();
        let p = persona(
            "hispanic",
            "female",
            RoleAdoption::Direct,
            DemographicPriming::Explicit,
            Phrasing::V1,
            None,
        );
        let out = render_persona_prompt(&p, &TaskSpec::open(TaskKind::SelfDescription).unwrap(), data)
            .unwrap();
        assert_eq!(
            out.prompt,
            "You are a Hispanic woman. How would you describe yourself? Only respond with the \
             self-description. Use the following JSON format: {\"self_description\": <a detailed \
             self-description>}"
        );
        assert_eq!(
            out.substitutions,
            vec![
                (Slot::RExplicit, "Hispanic".to_string()),
                (Slot::G1, "woman".to_string())
            ]
        );
    }

    #[test]
    fn name_priming_renders_title_and_surname() {
        let data = MatrixData::bundled();
        let p = persona(
            "white",
            "male",
            RoleAdoption::Direct,
            DemographicPriming::Name,
            Phrasing::V1,
            Some("Olson"),
        );
        let out = render_persona_prompt(&p, &TaskSpec::open(TaskKind::SelfDescription).unwrap(), data)
            .unwrap();
        assert!(
            out.prompt.starts_with("You are a person named Mr. Olson. "),
            "got: {}",
            out.prompt
        );
        assert!(out
            .substitutions
            .contains(&(Slot::NmList, "Olson".to_string())));
    }

    #[test]
    fn interview_structured_v2_survey_prompt_has_dialogue_lines() {
        let data = MatrixData::bundled();
        let p = persona(
            "black",
            "female",
            RoleAdoption::Interview,
            DemographicPriming::Structured,
            Phrasing::V2,
            None,
        );
        let out =
            render_persona_prompt(&p, &TaskSpec::survey(sample_question()), data).unwrap();
        assert!(out.prompt.contains("Speaker 2: My gender is 'female'."));
        assert!(out.prompt.contains("Speaker 2: I live in the U.S."));
        assert!(out
            .prompt
            .contains("Speaker 2: My race/ethnicity is 'Black'."));
        // Closed-ended interview lists exclude the open-only groups.
        assert!(out.prompt.contains("Are you 'male' or 'female'?"));
    }

    #[test]
    fn survey_task_renders_question_with_options() {
        let data = MatrixData::bundled();
        let p = persona(
            "white",
            "male",
            RoleAdoption::Direct,
            DemographicPriming::Explicit,
            Phrasing::V1,
            None,
        );
        let out =
            render_persona_prompt(&p, &TaskSpec::survey(sample_question()), data).unwrap();
        assert!(out.prompt.starts_with("You are a White man who lives in the U.S. "));
        assert!(out.prompt.contains(
            "How would you answer the following question: How much, if at all, do you worry \
             about the weather? Options: A lot; Some; Not much."
        ));
        assert!(out.prompt.ends_with(
            "{\"answer_option\": <one of the listed answer options, without any extra \
             commentary whatsoever>}"
        ));
    }

    #[test]
    fn third_person_v2_is_the_bare_task_string() {
        let data = MatrixData::bundled();
        for priming in DemographicPriming::ALL {
            let name = (priming == DemographicPriming::Name).then(|| "Olson");
            let p = persona(
                "asian",
                "male",
                RoleAdoption::ThirdPerson,
                priming,
                Phrasing::V2,
                name,
            );
            let out =
                render_persona_prompt(&p, &TaskSpec::open(TaskKind::SelfDescription).unwrap(), data)
                    .unwrap();
            assert_eq!(
                out.prompt,
                "How would he describe himself? Only respond with the self-description. Use the \
                 following JSON format: {\"self_description\": <a detailed self-description>}"
            );
        }
    }

    #[test]
    fn third_person_bio_uses_possessive_pronoun() {
        let data = MatrixData::bundled();
        let p = persona(
            "middle-eastern",
            "nonbinary",
            RoleAdoption::ThirdPerson,
            DemographicPriming::Explicit,
            Phrasing::V1,
            None,
        );
        let out = render_persona_prompt(&p, &TaskSpec::open(TaskKind::SocialMediaBio).unwrap(), data)
            .unwrap();
        assert!(out
            .prompt
            .starts_with("Think of a Middle-Eastern nonbinary person. What would be their social media username and bio?"));
    }

    #[test]
    fn closed_mode_rejects_open_only_groups_even_without_placeholders() {
        let data = MatrixData::bundled();
        // Third-person v2 has no demographic placeholder, yet nonbinary must
        // still be rejected for the survey task.
        let p = persona(
            "white",
            "nonbinary",
            RoleAdoption::ThirdPerson,
            DemographicPriming::Explicit,
            Phrasing::V2,
            None,
        );
        let err = render_persona_prompt(&p, &TaskSpec::survey(sample_question()), data).unwrap_err();
        match err {
            Error::MissingDescriptor { placeholder, .. } => assert_eq!(placeholder, "[G1]"),
            other => panic!("expected MissingDescriptor, got {other:?}"),
        }
    }

    #[test]
    fn rendering_is_deterministic_and_leaves_no_placeholders() {
        let data = MatrixData::bundled();
        let tokens = [
            "[TASK]",
            "[QUESTION]",
            "[R]",
            "[G1]",
            "[G2]",
            "[P1]",
            "[P2]",
            "[P3]",
            "[P4]",
            "[NM]",
            "[R_list1]",
            "[R_list2]",
            "[G_list1]",
            "[G_list2]",
        ];
        for race in data.races() {
            for gender in data.genders() {
                for pt in PromptType::all() {
                    for phrasing in Phrasing::ALL {
                        for kind in TaskKind::ALL {
                            if kind.mode() == Mode::Closed
                                && !(race.closed_ended && gender.closed_ended)
                            {
                                continue;
                            }
                            let name = (pt.priming == DemographicPriming::Name)
                                .then(|| race.surnames[0].clone());
                            let p = PersonaSpec {
                                group: Group::new(&race.slug, &gender.slug),
                                prompt_type: pt,
                                phrasing,
                                name,
                            };
                            let task = match kind {
                                TaskKind::SubjectiveQa => TaskSpec::survey(sample_question()),
                                k => TaskSpec::open(k).unwrap(),
                            };
                            let a = render_persona_prompt(&p, &task, data).unwrap();
                            let b = render_persona_prompt(&p, &task, data).unwrap();
                            assert_eq!(a, b);
                            for token in tokens {
                                assert!(
                                    !a.prompt.contains(token),
                                    "{token} survived in {}/{}/{:?}: {}",
                                    p.group,
                                    pt.id(),
                                    kind,
                                    a.prompt
                                );
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn question_text_is_spliced_verbatim() {
        let data = MatrixData::bundled();
        let p = persona(
            "white",
            "male",
            RoleAdoption::Direct,
            DemographicPriming::Explicit,
            Phrasing::V1,
            None,
        );
        let mut q = sample_question();
        // Bracketed text inside question data must not be treated as a
        // placeholder.
        q.text = "Which statement about [R] do you prefer?".to_string();
        let out = render_persona_prompt(&p, &TaskSpec::survey(q), data).unwrap();
        assert!(out.prompt.contains("Which statement about [R] do you prefer?"));
    }
}
