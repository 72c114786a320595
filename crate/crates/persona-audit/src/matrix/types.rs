//! Core vocabulary of the prompt matrix: demographic groups, prompt-type
//! axes, task kinds, survey questions, and the concrete jobs the grid
//! expands into.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the model is asked to take on the persona.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleAdoption {
    /// "You are a ..." / "Act as a ..."
    Direct,
    /// A short interview dialogue establishing the persona.
    Interview,
    /// "Think of a ..." with the task phrased in the third person.
    ThirdPerson,
}

impl RoleAdoption {
    pub const ALL: [RoleAdoption; 3] = [
        RoleAdoption::Direct,
        RoleAdoption::Interview,
        RoleAdoption::ThirdPerson,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RoleAdoption::Direct => "direct",
            RoleAdoption::Interview => "interview",
            RoleAdoption::ThirdPerson => "third_person",
        }
    }
}

impl fmt::Display for RoleAdoption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How the demographic group is communicated to the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemographicPriming {
    /// Explicit descriptors: "a Hispanic woman".
    Explicit,
    /// Indirect priming through a title and surname: "Ms. Garcia".
    Name,
    /// Structured key/value descriptors: "race/ethnicity 'Hispanic'".
    Structured,
}

impl DemographicPriming {
    pub const ALL: [DemographicPriming; 3] = [
        DemographicPriming::Explicit,
        DemographicPriming::Name,
        DemographicPriming::Structured,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DemographicPriming::Explicit => "explicit",
            DemographicPriming::Name => "name",
            DemographicPriming::Structured => "structured",
        }
    }
}

impl fmt::Display for DemographicPriming {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Each template exists in two alternative phrasings to soften idiosyncratic
/// wording effects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phrasing {
    V1,
    V2,
}

impl Phrasing {
    pub const ALL: [Phrasing; 2] = [Phrasing::V1, Phrasing::V2];

    pub fn as_str(self) -> &'static str {
        match self {
            Phrasing::V1 => "v1",
            Phrasing::V2 => "v2",
        }
    }
}

impl fmt::Display for Phrasing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A prompt type is the combination of role adoption and demographic priming;
/// the full matrix has nine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PromptType {
    pub role: RoleAdoption,
    pub priming: DemographicPriming,
}

impl PromptType {
    pub fn new(role: RoleAdoption, priming: DemographicPriming) -> Self {
        PromptType { role, priming }
    }

    /// All nine prompt types in a fixed order (role-major).
    pub fn all() -> Vec<PromptType> {
        let mut out = Vec::with_capacity(9);
        for role in RoleAdoption::ALL {
            for priming in DemographicPriming::ALL {
                out.push(PromptType { role, priming });
            }
        }
        out
    }

    pub fn id(&self) -> String {
        format!("{}-{}", self.role, self.priming)
    }
}

impl fmt::Display for PromptType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.role, self.priming)
    }
}

/// A demographic group: the cross of a race/ethnicity slug and a gender slug
/// as defined in the descriptor tables.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Group {
    pub race: String,
    pub gender: String,
}

impl Group {
    pub fn new(race: impl Into<String>, gender: impl Into<String>) -> Self {
        Group {
            race: race.into(),
            gender: gender.into(),
        }
    }

    /// Stable identifier used in store records, question files, and reports,
    /// e.g. `"hispanic-female"`.
    pub fn id(&self) -> String {
        format!("{}-{}", self.race, self.gender)
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.race, self.gender)
    }
}

/// The three audited tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    SelfDescription,
    SocialMediaBio,
    SubjectiveQa,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [
        TaskKind::SelfDescription,
        TaskKind::SocialMediaBio,
        TaskKind::SubjectiveQa,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::SelfDescription => "self_description",
            TaskKind::SocialMediaBio => "social_media_bio",
            TaskKind::SubjectiveQa => "subjective_qa",
        }
    }

    /// Whether the task produces free text (open) or scored answer options
    /// (closed). Closed-ended rendering adds the "who lives in the U.S."
    /// fragments and uses the narrower descriptor lists.
    pub fn mode(self) -> Mode {
        match self {
            TaskKind::SubjectiveQa => Mode::Closed,
            _ => Mode::Open,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Open-ended (free text) vs closed-ended (survey) rendering mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Open,
    Closed,
}

/// A survey question with per-group human reference distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyQuestion {
    pub id: String,
    pub text: String,
    pub options: Vec<String>,
    /// Group id (e.g. `"white-male"`) → probability per option, aligned with
    /// `options`.
    #[serde(default)]
    pub human_distributions: BTreeMap<String, Vec<f64>>,
}

impl SurveyQuestion {
    pub fn validate(&self) -> Result<()> {
        if self.options.len() < 2 {
            return Err(Error::Config(format!(
                "question '{}' has {} option(s); at least 2 required",
                self.id,
                self.options.len()
            )));
        }
        for (group, dist) in &self.human_distributions {
            if dist.len() != self.options.len() {
                return Err(Error::Config(format!(
                    "question '{}': distribution for '{}' has {} entries, expected {}",
                    self.id,
                    group,
                    dist.len(),
                    self.options.len()
                )));
            }
            let sum: f64 = dist.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "question '{}': distribution for '{}' sums to {sum}, expected 1",
                    self.id, group
                )));
            }
            if dist.iter().any(|p| *p < 0.0) {
                return Err(Error::Config(format!(
                    "question '{}': distribution for '{}' has a negative entry",
                    self.id, group
                )));
            }
        }
        Ok(())
    }
}

/// One cell of the persona matrix: who the model should be and how that is
/// communicated. `name` is present exactly when `prompt_type.priming` is
/// [`DemographicPriming::Name`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PersonaSpec {
    pub group: Group,
    pub prompt_type: PromptType,
    pub phrasing: Phrasing,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl PersonaSpec {
    pub fn validate(&self) -> Result<()> {
        let name_primed = self.prompt_type.priming == DemographicPriming::Name;
        match (&self.name, name_primed) {
            (None, true) => Err(Error::Config(format!(
                "persona {}/{} uses name priming but has no name",
                self.group,
                self.prompt_type.id()
            ))),
            (Some(_), false) => Err(Error::Config(format!(
                "persona {}/{} has a name but does not use name priming",
                self.group,
                self.prompt_type.id()
            ))),
            _ => Ok(()),
        }
    }
}

/// What the persona is asked to do. The question is present exactly for
/// [`TaskKind::SubjectiveQa`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<SurveyQuestion>,
}

impl TaskSpec {
    pub fn open(kind: TaskKind) -> Result<Self> {
        if kind == TaskKind::SubjectiveQa {
            return Err(Error::Config(
                "subjective_qa requires a question".to_string(),
            ));
        }
        Ok(TaskSpec {
            kind,
            question: None,
        })
    }

    pub fn survey(question: SurveyQuestion) -> Self {
        TaskSpec {
            kind: TaskKind::SubjectiveQa,
            question: Some(question),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let closed = self.kind == TaskKind::SubjectiveQa;
        match (&self.question, closed) {
            (None, true) => Err(Error::Config(
                "subjective_qa task has no question".to_string(),
            )),
            (Some(q), false) => Err(Error::Config(format!(
                "task {} carries question '{}' but is open-ended",
                self.kind, q.id
            ))),
            (Some(q), true) => q.validate(),
            (None, false) => Ok(()),
        }
    }
}

/// Decoding parameters forwarded to the endpoint with every request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_top_p")]
    pub top_p: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

fn default_temperature() -> f64 {
    1.0
}

fn default_top_p() -> f64 {
    1.0
}

fn default_max_tokens() -> u32 {
    512
}

impl Default for DecodingParams {
    fn default() -> Self {
        DecodingParams {
            temperature: 1.0,
            top_p: 1.0,
            max_tokens: 512,
        }
    }
}

/// A fully rendered unit of work: one request to the audited model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptJob {
    /// Deterministic id built from the grid coordinates; unique within a run.
    pub id: String,
    pub persona: PersonaSpec,
    pub task: TaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_id: Option<String>,
    /// Byte-exact template expansion for (persona, task).
    pub prompt: String,
    pub seed: u64,
    pub decoding: DecodingParams,
}

impl PromptJob {
    /// Builds the canonical job id from grid coordinates. Components are
    /// joined with `/`; absent name/question components render as `-`.
    pub fn make_id(
        task: TaskKind,
        persona: &PersonaSpec,
        question_id: Option<&str>,
        seed: u64,
    ) -> String {
        format!(
            "{}/{}/{}/{}/{}/{}/{}/{}/{:05}",
            task,
            persona.group.race,
            persona.group.gender,
            persona.prompt_type.role,
            persona.prompt_type.priming,
            persona.phrasing,
            persona.name.as_deref().unwrap_or("-"),
            question_id.unwrap_or("-"),
            seed
        )
    }
}
