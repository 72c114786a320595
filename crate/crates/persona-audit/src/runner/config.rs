//! Run configuration: the TOML file that names the endpoints, the grid
//! axes, and the output directory, plus the loaded context a run carries
//! through every stage.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::gateway::EndpointProfile;
use crate::matrix::{
    DemographicPriming, GridSpec, MatrixData, Mode, Phrasing, RoleAdoption, SurveyQuestion,
    TaskKind,
};
use crate::store::Store;

/// Everything a run needs, parsed from one TOML file.
///
/// Axis lists (`races`, `genders`, `roles`, `primings`, `phrasings`) default
/// to empty, which means "every bundled value"; listing a subset narrows the
/// grid. Credentials never live here — each endpoint names the environment
/// variable holding its key.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Stable identifier recorded in the store manifest; resuming checks it.
    pub run_id: String,
    /// Run directory, resolved relative to the config file. Holds `store/`,
    /// `exports/`, and `reports/`.
    pub out_dir: PathBuf,
    /// Base RNG seed: offsets every job seed and seeds the random baseline.
    #[serde(default)]
    pub seed: u64,
    /// Tasks to run, in order.
    pub tasks: Vec<TaskKind>,
    #[serde(default)]
    pub races: Vec<String>,
    #[serde(default)]
    pub genders: Vec<String>,
    #[serde(default)]
    pub roles: Vec<RoleAdoption>,
    #[serde(default)]
    pub primings: Vec<DemographicPriming>,
    #[serde(default)]
    pub phrasings: Vec<Phrasing>,
    #[serde(default = "default_seeds_per_cell")]
    pub seeds_per_cell: u64,
    /// JSONL survey questions, resolved relative to the config file.
    /// Required exactly when `tasks` includes the survey task.
    #[serde(default)]
    pub questions_path: Option<PathBuf>,
    /// The audited model.
    pub endpoint: EndpointProfile,
    /// Embedding endpoint for the semantic-diversity metric.
    pub embedding: EndpointProfile,
    /// Annotator endpoint for the role-violation screen.
    pub judge: EndpointProfile,
    /// The judge should be a different model from the one under audit;
    /// set this to accept a same-model judge anyway.
    #[serde(default)]
    pub allow_same_judge: bool,
    #[serde(default)]
    pub validation: ValidationConfig,
    #[serde(default)]
    pub baseline: BaselineConfig,
}

fn default_seeds_per_cell() -> u64 {
    100
}

/// Settings for the sampled log-probability validation stage.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationConfig {
    /// Sampled answers drawn per validated question.
    #[serde(default = "default_validation_samples")]
    pub samples: usize,
    /// How many survey questions to validate (the first N of the file).
    #[serde(default = "default_validation_questions")]
    pub questions: usize,
}

fn default_validation_samples() -> usize {
    1_000
}

fn default_validation_questions() -> usize {
    1
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            samples: default_validation_samples(),
            questions: default_validation_questions(),
        }
    }
}

/// Settings for the uniform-random alignment baseline.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    #[serde(default = "default_baseline_trials")]
    pub trials: usize,
}

fn default_baseline_trials() -> usize {
    100
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            trials: default_baseline_trials(),
        }
    }
}

impl RunConfig {
    fn validate(&self) -> Result<()> {
        if self.run_id.trim().is_empty() {
            return Err(Error::Config("run_id must not be empty".to_string()));
        }
        if self.tasks.is_empty() {
            return Err(Error::Config("tasks must not be empty".to_string()));
        }
        let mut seen = BTreeSet::new();
        for task in &self.tasks {
            if !seen.insert(*task) {
                return Err(Error::Config(format!("task '{task}' listed twice")));
            }
        }
        let has_survey = self.tasks.iter().any(|t| t.mode() == Mode::Closed);
        match (&self.questions_path, has_survey) {
            (None, true) => {
                return Err(Error::Config(
                    "the survey task needs questions_path".to_string(),
                ))
            }
            (Some(_), false) => {
                return Err(Error::Config(
                    "questions_path is set but no task uses it".to_string(),
                ))
            }
            _ => {}
        }
        for (name, profile) in [
            ("endpoint", &self.endpoint),
            ("embedding", &self.embedding),
            ("judge", &self.judge),
        ] {
            profile
                .validate()
                .map_err(|e| Error::Config(format!("{name}: {e}")))?;
        }
        if self.judge.model == self.endpoint.model && !self.allow_same_judge {
            return Err(Error::Config(format!(
                "judge model '{}' equals the audited model; a self-judging screen is unreliable — \
                 pick a different judge or set allow_same_judge = true",
                self.judge.model
            )));
        }
        if self.baseline.trials < 2 {
            return Err(Error::Config("baseline.trials must be ≥ 2".to_string()));
        }
        if self.validation.samples == 0 || self.validation.questions == 0 {
            return Err(Error::Config(
                "validation.samples and validation.questions must be ≥ 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// Parses a run config, resolving `out_dir` and `questions_path` relative to
/// the config file's directory.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let body = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    let mut config: RunConfig = toml::from_str(&body)
        .map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    if config.out_dir.is_relative() {
        config.out_dir = base.join(&config.out_dir);
    }
    if let Some(qp) = &config.questions_path {
        if qp.is_relative() {
            config.questions_path = Some(base.join(qp));
        }
    }
    config.validate()?;
    Ok(config)
}

/// Parses a JSONL question file: one `SurveyQuestion` per line, blank lines
/// ignored, ids unique.
pub fn load_questions(path: &Path) -> Result<Vec<SurveyQuestion>> {
    let body = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read questions {}: {e}", path.display())))?;
    let mut questions = Vec::new();
    let mut ids = BTreeSet::new();
    for (idx, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let question: SurveyQuestion = serde_json::from_str(line).map_err(|e| {
            Error::Config(format!("{} line {}: {e}", path.display(), idx + 1))
        })?;
        question.validate()?;
        if !ids.insert(question.id.clone()) {
            return Err(Error::Config(format!(
                "{} line {}: duplicate question id '{}'",
                path.display(),
                idx + 1,
                question.id
            )));
        }
        questions.push(question);
    }
    if questions.is_empty() {
        return Err(Error::Config(format!(
            "{} holds no questions",
            path.display()
        )));
    }
    Ok(questions)
}

/// A loaded run: config plus the bundled descriptor tables and the parsed
/// question file. Every stage takes one of these.
pub struct RunContext {
    pub config: RunConfig,
    pub data: &'static MatrixData,
    pub questions: Vec<SurveyQuestion>,
}

impl RunContext {
    pub fn load(config_path: &Path) -> Result<RunContext> {
        let config = load_config(config_path)?;
        let questions = match &config.questions_path {
            Some(path) => load_questions(path)?,
            None => Vec::new(),
        };
        Ok(RunContext {
            config,
            data: MatrixData::bundled(),
            questions,
        })
    }

    /// The grid for one task: the full bundled grid, narrowed by any axis
    /// lists in the config. Jobs inherit the audited endpoint's decoding
    /// parameters so stored seeds and validation replays agree.
    pub fn grid_spec(&self, task: TaskKind) -> GridSpec {
        let questions = if task.mode() == Mode::Closed {
            self.questions.clone()
        } else {
            Vec::new()
        };
        let mut spec = GridSpec::full(task, self.data, questions);
        if !self.config.races.is_empty() {
            spec.races = self.config.races.clone();
        }
        if !self.config.genders.is_empty() {
            spec.genders = self.config.genders.clone();
        }
        if !self.config.roles.is_empty() {
            spec.roles = self.config.roles.clone();
        }
        if !self.config.primings.is_empty() {
            spec.primings = self.config.primings.clone();
        }
        if !self.config.phrasings.is_empty() {
            spec.phrasings = self.config.phrasings.clone();
        }
        spec.seeds_per_cell = self.config.seeds_per_cell;
        spec.seed_base = self.config.seed;
        spec.decoding = self.config.endpoint.decoding;
        spec
    }

    pub fn store_dir(&self) -> PathBuf {
        self.config.out_dir.join("store")
    }

    pub fn exports_dir(&self) -> PathBuf {
        self.config.out_dir.join("exports")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.config.out_dir.join("reports")
    }

    /// Opens the run's store, or creates it (collect does this first).
    pub fn open_or_create_store(&self) -> Result<Store> {
        Store::open_or_create(
            &self.store_dir(),
            &self.config.run_id,
            &self.config.endpoint.model,
        )
    }

    /// Opens the existing store; a missing one means collect never ran.
    pub fn open_store(&self) -> Result<Store> {
        if !self.store_dir().join("manifest.json").exists() {
            return Err(Error::Stage(format!(
                "no store at {}; run `collect` first",
                self.store_dir().display()
            )));
        }
        Store::open(&self.store_dir())
    }
}
