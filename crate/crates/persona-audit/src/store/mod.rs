//! Append-only response store: the single source of truth for downstream
//! metrics.
//!
//! Layout of a store directory:
//!
//! ```text
//! store/
//!   manifest.json            run id, audited model, format version
//!   records/<task>.jsonl     one response record per line, append-only
//!   embeddings/<task>.jsonl  cached response embeddings, append-only
//! ```
//!
//! Records are written through a single appender; readers get immutable
//! snapshots. A torn final line (crash mid-write) is detected, reported, and
//! truncated away on open; corruption anywhere else is an error, since
//! append-only files cannot legitimately contain it.

mod record;

pub use record::{ExclusionReason, RecordStatus, ResponseRecord, RoleViolation, StatusKind};

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{Group, Phrasing, PromptJob, PromptType, TaskKind};

const FORMAT_VERSION: u32 = 1;

/// Store-level metadata, written once at creation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub run_id: String,
    /// Identifier of the audited model.
    pub model: String,
}

/// Conjunctive record filter; `None` fields match everything.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Filter {
    pub task: Option<TaskKind>,
    pub group: Option<Group>,
    pub prompt_type: Option<PromptType>,
    pub phrasing: Option<Phrasing>,
    pub status: Option<StatusKind>,
}

impl Filter {
    pub fn matches(&self, record: &ResponseRecord) -> bool {
        if let Some(task) = self.task {
            if record.task != task {
                return false;
            }
        }
        if let Some(group) = &self.group {
            if record.persona.group != *group {
                return false;
            }
        }
        if let Some(pt) = self.prompt_type {
            if record.persona.prompt_type != pt {
                return false;
            }
        }
        if let Some(phrasing) = self.phrasing {
            if record.persona.phrasing != phrasing {
                return false;
            }
        }
        if let Some(status) = self.status {
            if record.status.kind() != status {
                return false;
            }
        }
        true
    }
}

/// The response store. One writer at a time; see the module docs for the
/// file layout.
#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    manifest: Manifest,
    records: BTreeMap<String, ResponseRecord>,
    appenders: HashMap<TaskKind, File>,
}

impl Store {
    /// Creates a new store directory (which must not already contain a
    /// manifest) or opens an existing one, verifying run id and model.
    pub fn open_or_create(dir: &Path, run_id: &str, model: &str) -> Result<Store> {
        if dir.join("manifest.json").exists() {
            let store = Store::open(dir)?;
            if store.manifest.run_id != run_id {
                return Err(Error::Store(format!(
                    "store at {} belongs to run '{}', not '{}'",
                    dir.display(),
                    store.manifest.run_id,
                    run_id
                )));
            }
            if store.manifest.model != model {
                return Err(Error::Store(format!(
                    "store at {} audits model '{}', not '{}'",
                    dir.display(),
                    store.manifest.model,
                    model
                )));
            }
            return Ok(store);
        }
        fs::create_dir_all(dir.join("records"))?;
        fs::create_dir_all(dir.join("embeddings"))?;
        let manifest = Manifest {
            version: FORMAT_VERSION,
            run_id: run_id.to_string(),
            model: model.to_string(),
        };
        let body = serde_json::to_string_pretty(&manifest)?;
        fs::write(dir.join("manifest.json"), body + "\n")?;
        Ok(Store {
            dir: dir.to_path_buf(),
            manifest,
            records: BTreeMap::new(),
            appenders: HashMap::new(),
        })
    }

    /// Opens an existing store, recovering from a torn final line if needed.
    pub fn open(dir: &Path) -> Result<Store> {
        let manifest_path = dir.join("manifest.json");
        let body = fs::read_to_string(&manifest_path).map_err(|e| {
            Error::Store(format!(
                "cannot read manifest at {}: {e}",
                manifest_path.display()
            ))
        })?;
        let manifest: Manifest = serde_json::from_str(&body)
            .map_err(|e| Error::Store(format!("malformed manifest: {e}")))?;
        if manifest.version != FORMAT_VERSION {
            return Err(Error::Store(format!(
                "unsupported store format version {}",
                manifest.version
            )));
        }
        let mut records = BTreeMap::new();
        for task in TaskKind::ALL {
            let path = records_path(dir, task);
            if !path.exists() {
                continue;
            }
            for record in load_jsonl::<ResponseRecord>(&path)? {
                let record = record?;
                record.validate()?;
                if let Some(existing) = records.get(&record.job_id) {
                    if *existing != record {
                        return Err(Error::Integrity(format!(
                            "job '{}' stored twice with differing payloads",
                            record.job_id
                        )));
                    }
                } else {
                    records.insert(record.job_id.clone(), record);
                }
            }
        }
        Ok(Store {
            dir: dir.to_path_buf(),
            manifest,
            records,
            appenders: HashMap::new(),
        })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, job_id: &str) -> Option<&ResponseRecord> {
        self.records.get(job_id)
    }

    /// All records in job-id order.
    pub fn records(&self) -> impl Iterator<Item = &ResponseRecord> {
        self.records.values()
    }

    /// Records matching the filter, in job-id order.
    pub fn query<'a>(&'a self, filter: &'a Filter) -> impl Iterator<Item = &'a ResponseRecord> {
        self.records.values().filter(move |r| filter.matches(r))
    }

    /// Appends one record. Re-persisting an identical record is a no-op;
    /// a record with the same job id but a different payload is an
    /// integrity error.
    pub fn persist(&mut self, record: ResponseRecord) -> Result<()> {
        record.validate()?;
        if let Some(existing) = self.records.get(&record.job_id) {
            if *existing == record {
                return Ok(());
            }
            return Err(Error::Integrity(format!(
                "job '{}' already stored with a different payload",
                record.job_id
            )));
        }
        let task = record.task;
        let line = serde_json::to_string(&record)?;
        let file = match self.appenders.get_mut(&task) {
            Some(file) => file,
            None => {
                let file = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(records_path(&self.dir, task))?;
                self.appenders.entry(task).or_insert(file)
            }
        };
        file.write_all(line.as_bytes())?;
        file.write_all(b"\n")?;
        file.flush()?;
        self.records.insert(record.job_id.clone(), record);
        Ok(())
    }

    /// Replaces every record of one task atomically (write to a temporary
    /// file, then rename over the old one). Used by preprocessing, which
    /// annotates whole files at once. Returns `false` without touching the
    /// file when the new content is byte-identical, which makes reruns
    /// idempotent.
    pub fn replace_task_records(
        &mut self,
        task: TaskKind,
        new_records: Vec<ResponseRecord>,
    ) -> Result<bool> {
        let mut lines = String::new();
        let mut ids = BTreeMap::new();
        for record in &new_records {
            record.validate()?;
            if record.task != task {
                return Err(Error::Integrity(format!(
                    "record '{}' has task {}, expected {}",
                    record.job_id, record.task, task
                )));
            }
            if ids.insert(record.job_id.clone(), ()).is_some() {
                return Err(Error::Integrity(format!(
                    "duplicate job id '{}' in replacement set",
                    record.job_id
                )));
            }
            lines.push_str(&serde_json::to_string(record)?);
            lines.push('\n');
        }
        let path = records_path(&self.dir, task);
        let current = if path.exists() {
            fs::read_to_string(&path)?
        } else {
            String::new()
        };
        let changed = current != lines;
        if changed {
            // The cached appender (if any) still points at the old inode;
            // drop it before the rename so later appends reopen the new file.
            self.appenders.remove(&task);
            let tmp = path.with_extension("jsonl.tmp");
            {
                let mut f = File::create(&tmp)?;
                f.write_all(lines.as_bytes())?;
                f.sync_all()?;
            }
            fs::rename(&tmp, &path)?;
        }
        self.records.retain(|_, r| r.task != task);
        for record in new_records {
            self.records.insert(record.job_id.clone(), record);
        }
        Ok(changed)
    }

    /// Jobs from the grid that have no stored record yet. Stored records are
    /// terminal whatever their status: `Ok` and `Excluded` were collected,
    /// `Failed` already exhausted its retries.
    pub fn resume(&self, run_id: &str, jobs: &[PromptJob]) -> Result<Vec<PromptJob>> {
        if run_id != self.manifest.run_id {
            return Err(Error::Store(format!(
                "resume requested for run '{run_id}' but the store belongs to run '{}'",
                self.manifest.run_id
            )));
        }
        Ok(jobs
            .iter()
            .filter(|job| !self.records.contains_key(&job.id))
            .cloned()
            .collect())
    }

    /// Loads the embedding cache for a task: job id → unit vector. The first
    /// occurrence of a job id wins.
    pub fn load_embeddings(&self, task: TaskKind) -> Result<BTreeMap<String, Vec<f64>>> {
        let path = embeddings_path(&self.dir, task);
        let mut map = BTreeMap::new();
        if !path.exists() {
            return Ok(map);
        }
        for entry in load_jsonl::<EmbeddingLine>(&path)? {
            let entry = entry?;
            map.entry(entry.job_id).or_insert(entry.vector);
        }
        Ok(map)
    }

    /// Appends embeddings to the cache.
    pub fn append_embeddings(
        &mut self,
        task: TaskKind,
        entries: &[(String, Vec<f64>)],
    ) -> Result<()> {
        if entries.is_empty() {
            return Ok(());
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(embeddings_path(&self.dir, task))?;
        for (job_id, vector) in entries {
            let line = serde_json::to_string(&EmbeddingLine {
                job_id: job_id.clone(),
                vector: vector.clone(),
            })?;
            file.write_all(line.as_bytes())?;
            file.write_all(b"\n")?;
        }
        file.flush()?;
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct EmbeddingLine {
    job_id: String,
    vector: Vec<f64>,
}

fn records_path(dir: &Path, task: TaskKind) -> PathBuf {
    dir.join("records").join(format!("{task}.jsonl"))
}

fn embeddings_path(dir: &Path, task: TaskKind) -> PathBuf {
    dir.join("embeddings").join(format!("{task}.jsonl"))
}

/// Reads a JSONL file, tolerating exactly one torn final line: if the last
/// line fails to parse it is logged, truncated off the file, and skipped.
/// Parse failures anywhere else are integrity errors.
fn load_jsonl<T: serde::de::DeserializeOwned>(
    path: &Path,
) -> Result<impl Iterator<Item = Result<T>>> {
    let content = fs::read_to_string(path)?;
    let mut entries: Vec<Result<T>> = Vec::new();
    let mut offset = 0usize;
    let mut torn: Option<usize> = None; // byte offset where the torn line starts
    let mut line_no = 0usize;
    while offset < content.len() {
        let rest = &content[offset..];
        let (line, next_offset) = match rest.find('\n') {
            Some(i) => (&rest[..i], offset + i + 1),
            None => (rest, content.len()),
        };
        line_no += 1;
        if !line.trim().is_empty() {
            match serde_json::from_str::<T>(line) {
                Ok(value) => entries.push(Ok(value)),
                Err(e) => {
                    let is_last = next_offset >= content.len();
                    if is_last {
                        torn = Some(offset);
                    } else {
                        return Err(Error::Integrity(format!(
                            "{}:{line_no}: corrupt record mid-file: {e}",
                            path.display()
                        )));
                    }
                }
            }
        }
        offset = next_offset;
    }
    if let Some(start) = torn {
        log::warn!(
            "{}: dropping torn final line at byte {start} (crash recovery)",
            path.display()
        );
        let file = OpenOptions::new().write(true).open(path)?;
        file.set_len(start as u64)?;
    } else if !content.is_empty() && !content.ends_with('\n') {
        // Complete final record but no newline; add one so appends stay
        // line-delimited.
        let mut file = OpenOptions::new().append(true).open(path)?;
        file.write_all(b"\n")?;
    }
    Ok(entries.into_iter())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{DemographicPriming, PersonaSpec, Phrasing, RoleAdoption};
    use std::io::Write;

    fn persona(race: &str, gender: &str, pt: PromptType, phrasing: Phrasing) -> PersonaSpec {
        PersonaSpec {
            group: Group::new(race, gender),
            prompt_type: pt,
            phrasing,
            name: None,
        }
    }

    fn sample_record(i: usize) -> ResponseRecord {
        let pt = PromptType::new(RoleAdoption::Direct, DemographicPriming::Explicit);
        ResponseRecord::collected_text(
            format!("self_description/white/male/direct/explicit/v1/-/-/{i:05}"),
            persona("white", "male", pt, Phrasing::V1),
            TaskKind::SelfDescription,
            i as u64,
            format!("{{\"self_description\": \"response {i}\"}}"),
            1,
            1_700_000_000_000 + i as u64,
            10,
        )
    }

    #[test]
    fn persist_and_reopen_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open_or_create(dir.path(), "run-1", "mock-model").unwrap();
        for i in 0..5 {
            store.persist(sample_record(i)).unwrap();
        }
        drop(store);
        let store = Store::open(dir.path()).unwrap();
        assert_eq!(store.len(), 5);
        assert_eq!(store.get(&sample_record(3).job_id), Some(&sample_record(3)));
        assert_eq!(store.manifest().run_id, "run-1");
    }

    #[test]
    fn duplicate_identical_record_is_deduplicated() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open_or_create(dir.path(), "run-1", "m").unwrap();
        store.persist(sample_record(0)).unwrap();
        store.persist(sample_record(0)).unwrap();
        assert_eq!(store.len(), 1);
        drop(store);
        let content =
            fs::read_to_string(dir.path().join("records/self_description.jsonl")).unwrap();
        assert_eq!(content.lines().count(), 1, "one stored copy");
    }

    #[test]
    fn duplicate_with_different_payload_is_an_integrity_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open_or_create(dir.path(), "run-1", "m").unwrap();
        store.persist(sample_record(0)).unwrap();
        let mut other = sample_record(0);
        other.raw_text = Some("different".to_string());
        let err = store.persist(other).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)), "got {err:?}");
    }

    #[test]
    fn torn_final_line_is_dropped_and_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open_or_create(dir.path(), "run-1", "m").unwrap();
        store.persist(sample_record(0)).unwrap();
        store.persist(sample_record(1)).unwrap();
        drop(store);
        let path = dir.path().join("records/self_description.jsonl");
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"job_id\": \"torn").unwrap();
        drop(f);

        let mut store = Store::open(dir.path()).unwrap();
        assert_eq!(store.len(), 2, "torn line dropped");
        // The file was truncated, so appending keeps it well-formed.
        store.persist(sample_record(2)).unwrap();
        drop(store);
        let store = Store::open(dir.path()).unwrap();
        assert_eq!(store.len(), 3);
    }

    #[test]
    fn mid_file_corruption_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open_or_create(dir.path(), "run-1", "m").unwrap();
        store.persist(sample_record(0)).unwrap();
        store.persist(sample_record(1)).unwrap();
        drop(store);
        let path = dir.path().join("records/self_description.jsonl");
        let content = fs::read_to_string(&path).unwrap();
        let corrupted = content.replacen("\"job_id\"", "\"job_id", 1);
        fs::write(&path, corrupted).unwrap();
        let err = Store::open(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Integrity(_)), "got {err:?}");
    }

    #[test]
    fn query_filters_compose_conjunctively() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open_or_create(dir.path(), "run-1", "m").unwrap();
        let interview = PromptType::new(RoleAdoption::Interview, DemographicPriming::Explicit);
        for i in 0..4 {
            store.persist(sample_record(i)).unwrap();
        }
        let mut excluded = sample_record(4);
        excluded.status = RecordStatus::Excluded {
            reason: ExclusionReason::Refusal,
        };
        store.persist(excluded).unwrap();
        let mut r = ResponseRecord::collected_text(
            "self_description/black/female/interview/explicit/v1/-/-/00000".to_string(),
            persona("black", "female", interview, Phrasing::V1),
            TaskKind::SelfDescription,
            0,
            "x".to_string(),
            1,
            0,
            0,
        );
        r.raw_text = Some("y".to_string());
        store.persist(r).unwrap();

        let all = Filter::default();
        assert_eq!(store.query(&all).count(), 6);
        let ok_only = Filter {
            status: Some(StatusKind::Ok),
            ..Filter::default()
        };
        assert_eq!(store.query(&ok_only).count(), 5);
        let narrow = Filter {
            task: Some(TaskKind::SelfDescription),
            group: Some(Group::new("white", "male")),
            prompt_type: Some(PromptType::new(
                RoleAdoption::Direct,
                DemographicPriming::Explicit,
            )),
            phrasing: Some(Phrasing::V1),
            status: Some(StatusKind::Ok),
        };
        assert_eq!(store.query(&narrow).count(), 4);
        let unused_group = Filter {
            group: Some(Group::new("asian", "male")),
            ..Filter::default()
        };
        assert_eq!(store.query(&unused_group).count(), 0);
        // Deterministic job-id order.
        let ids: Vec<_> = store.query(&all).map(|r| r.job_id.clone()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
    }

    #[test]
    fn resume_returns_the_set_difference() {
        use crate::matrix::{expand_grid, GridSpec, MatrixData};
        let data = MatrixData::bundled();
        let spec = GridSpec {
            task: TaskKind::SelfDescription,
            races: vec!["white".to_string()],
            genders: vec!["male".to_string()],
            roles: vec![RoleAdoption::Direct],
            primings: vec![DemographicPriming::Explicit],
            phrasings: vec![Phrasing::V1],
            seeds_per_cell: 10,
            seed_base: 0,
            questions: Vec::new(),
            decoding: Default::default(),
        };
        let jobs = expand_grid(data, &spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open_or_create(dir.path(), "run-1", "m").unwrap();
        assert_eq!(store.resume("run-1", &jobs).unwrap().len(), 10);

        // One failed record is terminal too.
        for (i, job) in jobs.iter().enumerate().take(7) {
            let record = if i == 0 {
                ResponseRecord::failed(
                    job.id.clone(),
                    job.persona.clone(),
                    job.task,
                    None,
                    job.seed,
                    "HTTP 400".to_string(),
                    3,
                    0,
                )
            } else {
                let mut r = sample_record(0);
                r.job_id = job.id.clone();
                r.seed = job.seed;
                r
            };
            store.persist(record).unwrap();
        }
        let remaining = store.resume("run-1", &jobs).unwrap();
        assert_eq!(remaining.len(), 3);
        let expected: Vec<_> = jobs[7..].iter().map(|j| j.id.clone()).collect();
        assert_eq!(
            remaining.iter().map(|j| j.id.clone()).collect::<Vec<_>>(),
            expected
        );
        assert!(store.resume("other-run", &jobs).is_err());

        for job in &remaining {
            let mut r = sample_record(0);
            r.job_id = job.id.clone();
            r.seed = job.seed;
            store.persist(r).unwrap();
        }
        assert!(store.resume("run-1", &jobs).unwrap().is_empty());
    }

    #[test]
    fn replace_task_records_is_atomic_and_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open_or_create(dir.path(), "run-1", "m").unwrap();
        for i in 0..3 {
            store.persist(sample_record(i)).unwrap();
        }
        let mut annotated: Vec<_> = store.records().cloned().collect();
        for r in &mut annotated {
            r.extracted = Some("text".to_string());
            r.redacted = Some("text".to_string());
            r.language = Some("en".to_string());
            r.role_violation = RoleViolation::Human;
        }
        let changed = store
            .replace_task_records(TaskKind::SelfDescription, annotated.clone())
            .unwrap();
        assert!(changed);
        // Second identical rewrite leaves the file untouched.
        let changed = store
            .replace_task_records(TaskKind::SelfDescription, annotated.clone())
            .unwrap();
        assert!(!changed);
        // Appending still works after the rewrite (the appender was reset).
        store.persist(sample_record(7)).unwrap();
        drop(store);
        let store = Store::open(dir.path()).unwrap();
        assert_eq!(store.len(), 4);
        assert_eq!(
            store.get(&annotated[0].job_id).unwrap().language.as_deref(),
            Some("en")
        );
    }

    #[test]
    fn wrong_run_id_or_model_is_rejected_on_reopen() {
        let dir = tempfile::tempdir().unwrap();
        Store::open_or_create(dir.path(), "run-1", "model-a").unwrap();
        assert!(Store::open_or_create(dir.path(), "run-1", "model-a").is_ok());
        assert!(Store::open_or_create(dir.path(), "run-2", "model-a").is_err());
        assert!(Store::open_or_create(dir.path(), "run-1", "model-b").is_err());
    }

    #[test]
    fn embedding_cache_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open_or_create(dir.path(), "run-1", "m").unwrap();
        let entries = vec![
            ("job-a".to_string(), vec![0.6, 0.8]),
            ("job-b".to_string(), vec![1.0, 0.0]),
        ];
        store
            .append_embeddings(TaskKind::SelfDescription, &entries)
            .unwrap();
        let loaded = store.load_embeddings(TaskKind::SelfDescription).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded["job-a"], vec![0.6, 0.8]);
        assert!(store
            .load_embeddings(TaskKind::SocialMediaBio)
            .unwrap()
            .is_empty());
    }
}
