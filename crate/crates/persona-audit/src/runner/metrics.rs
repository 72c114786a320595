//! Metric stages: open-ended representation measures and closed-ended
//! alignment measures, exported as TSV tables under `exports/`.

use std::collections::BTreeMap;

use log::warn;

use crate::error::{Error, Result};
use crate::gateway::GatewayClient;
use crate::matrix::{Group, Mode, Phrasing, PromptType, TaskKind};
use crate::open_metrics::{
    bundled_lexica, classification_accuracy, marked_terms, non_english_rate, semantic_diversity,
    GroupCorpus, StereotypeCategory, MIN_DOCS_PER_GROUP,
};
use crate::closed_metrics::{aggregate_alignment, random_baseline};
use crate::store::{Filter, ResponseRecord, StatusKind, Store};

use super::config::RunContext;
use super::tsv::{fmt_f64, fmt_opt, TsvTable, NA};

/// Batch size for embedding requests.
const EMBED_BATCH: usize = 64;

fn phrasing_label(slot: Option<Phrasing>) -> String {
    match slot {
        Some(p) => p.to_string(),
        None => "pooled".to_string(),
    }
}

/// One analysis cell: the usable records of a (group, prompt type,
/// phrasing-or-pooled) combination.
struct Cell {
    group: Group,
    prompt_type: PromptType,
    slot: Option<Phrasing>,
    texts: Vec<String>,
    languages: Vec<String>,
    embeddings: Vec<Vec<f64>>,
}

impl Cell {
    fn corpus(&self) -> GroupCorpus {
        GroupCorpus::new(
            self.group.clone(),
            self.prompt_type,
            self.slot,
            self.texts.clone(),
        )
        .with_embeddings(self.embeddings.clone())
    }
}

/// Computes marked words, semantic diversity, non-English rates, stereotype
/// shares, and the classifier probe for every open-ended task, embedding
/// redacted texts on demand (cached in the store).
pub(super) async fn run_metrics_open(ctx: &RunContext) -> Result<()> {
    let open_tasks: Vec<_> = ctx
        .config
        .tasks
        .iter()
        .copied()
        .filter(|t| t.mode() == Mode::Open)
        .collect();
    if open_tasks.is_empty() {
        println!("metrics-open: no open-ended tasks in this run");
        return Ok(());
    }
    let mut store = ctx.open_store()?;
    let embedder = GatewayClient::new(ctx.config.embedding.clone())?;

    let stereo_columns: Vec<String> = StereotypeCategory::ALL
        .iter()
        .map(|c| format!("stereo:{}", c.as_str()))
        .collect();
    let mut cell_columns = vec![
        "task".to_string(),
        "race".to_string(),
        "gender".to_string(),
        "role".to_string(),
        "priming".to_string(),
        "phrasing".to_string(),
        "docs".to_string(),
        "marked_words".to_string(),
        "semantic_diversity".to_string(),
        "non_english_rate".to_string(),
    ];
    cell_columns.extend(stereo_columns);
    let mut cells_table = TsvTable::new(&cell_columns);
    let mut marked_table = TsvTable::new(&[
        "task", "race", "gender", "role", "priming", "phrasing", "token", "count", "z_race",
        "z_gender",
    ]);
    let mut classifier_table = TsvTable::new(&[
        "task", "role", "priming", "phrasing", "race", "gender", "docs", "accuracy",
    ]);

    for task in open_tasks {
        let records = usable_records(&mut store, task)?;
        ensure_embeddings(&mut store, &embedder, task, &records).await?;
        let vectors = store.load_embeddings(task)?;
        let cells = build_cells(ctx, task, &records, &vectors)?;
        let corpora: Vec<GroupCorpus> = cells.iter().map(Cell::corpus).collect();

        for (cell, corpus) in cells.iter().zip(&corpora) {
            let marked = match marked_terms(&corpora, &cell.group, cell.prompt_type, cell.slot) {
                Ok(words) => {
                    for word in &words {
                        marked_table.push(vec![
                            task.to_string(),
                            cell.group.race.clone(),
                            cell.group.gender.clone(),
                            cell.prompt_type.role.to_string(),
                            cell.prompt_type.priming.to_string(),
                            phrasing_label(cell.slot),
                            word.token.clone(),
                            word.count.to_string(),
                            fmt_opt(word.z_race),
                            fmt_opt(word.z_gender),
                        ]);
                    }
                    Some(words.len() as f64)
                }
                Err(Error::MissingReference(detail)) => {
                    warn!("metrics-open: {detail}");
                    None
                }
                Err(other) => return Err(other),
            };
            let diversity = match semantic_diversity(corpus) {
                Ok(v) => Some(v),
                Err(Error::Degenerate(detail)) => {
                    warn!("metrics-open: {}: {detail}", corpus.cell_id());
                    None
                }
                Err(other) => return Err(other),
            };
            let mut row = vec![
                task.to_string(),
                cell.group.race.clone(),
                cell.group.gender.clone(),
                cell.prompt_type.role.to_string(),
                cell.prompt_type.priming.to_string(),
                phrasing_label(cell.slot),
                cell.texts.len().to_string(),
                match marked {
                    Some(n) => format!("{}", n as usize),
                    None => NA.to_string(),
                },
                fmt_opt(diversity),
                fmt_f64(non_english_rate(&cell.languages)),
            ];
            for category in StereotypeCategory::ALL {
                let applies = bundled_lexica()
                    .iter()
                    .find(|l| l.category == category)
                    .is_some_and(|l| l.applies_to(&cell.group));
                if applies {
                    row.push(fmt_f64(crate::open_metrics::stereotype_share(
                        corpus, category,
                    )?));
                } else {
                    row.push(NA.to_string());
                }
            }
            cells_table.push(row);
        }

        // Classifier probe: one fit per (prompt type, phrasing slot) over
        // every group with enough documents.
        for prompt_type in PromptType::all() {
            for slot in [Some(Phrasing::V1), Some(Phrasing::V2), None] {
                let eligible: Vec<GroupCorpus> = corpora
                    .iter()
                    .filter(|c| {
                        c.prompt_type == prompt_type
                            && c.phrasing == slot
                            && c.texts.len() >= MIN_DOCS_PER_GROUP
                    })
                    .cloned()
                    .collect();
                if eligible.len() < 2 {
                    continue;
                }
                let accuracies = match classification_accuracy(&eligible) {
                    Ok(map) => map,
                    Err(Error::Degenerate(detail)) => {
                        warn!("metrics-open: classifier {prompt_type}/{}: {detail}", phrasing_label(slot));
                        continue;
                    }
                    Err(other) => return Err(other),
                };
                for corpus in &eligible {
                    let Some(accuracy) = accuracies.get(&corpus.group.id()) else {
                        continue;
                    };
                    classifier_table.push(vec![
                        task.to_string(),
                        prompt_type.role.to_string(),
                        prompt_type.priming.to_string(),
                        phrasing_label(slot),
                        corpus.group.race.clone(),
                        corpus.group.gender.clone(),
                        corpus.texts.len().to_string(),
                        fmt_f64(*accuracy),
                    ]);
                }
            }
        }
        println!(
            "metrics-open: task={task} cells={} usable_docs={}",
            cells.len(),
            records.len()
        );
    }

    let exports = ctx.exports_dir();
    cells_table.write_if_changed(&exports.join("open_metrics.tsv"))?;
    marked_table.write_if_changed(&exports.join("marked_words.tsv"))?;
    classifier_table.write_if_changed(&exports.join("classifier.tsv"))?;
    Ok(())
}

/// Usable (kept and preprocessed) records of one open task, cloned out of
/// the store so it can be mutated for embedding appends.
fn usable_records(store: &mut Store, task: TaskKind) -> Result<Vec<ResponseRecord>> {
    let all = Filter {
        task: Some(task),
        ..Filter::default()
    };
    if store.query(&all).next().is_none() {
        return Err(Error::Stage(format!(
            "no records for task {task}; run `collect` first"
        )));
    }
    let kept = Filter {
        task: Some(task),
        status: Some(StatusKind::Ok),
        ..Filter::default()
    };
    let records: Vec<ResponseRecord> = store.query(&kept).cloned().collect();
    if records
        .iter()
        .any(|r| r.raw_text.is_some() && r.extracted.is_none())
    {
        return Err(Error::Stage(format!(
            "task {task} has unprocessed records; run `preprocess` first"
        )));
    }
    Ok(records
        .into_iter()
        .filter(|r| r.redacted.is_some())
        .collect())
}

/// Embeds every usable record whose vector is not in the store yet.
async fn ensure_embeddings(
    store: &mut Store,
    embedder: &GatewayClient,
    task: TaskKind,
    records: &[ResponseRecord],
) -> Result<()> {
    let cached = store.load_embeddings(task)?;
    let missing: Vec<(&str, &str)> = records
        .iter()
        .filter(|r| !cached.contains_key(&r.job_id))
        .map(|r| (r.job_id.as_str(), r.redacted.as_deref().expect("usable")))
        .collect();
    if missing.is_empty() {
        return Ok(());
    }
    for chunk in missing.chunks(EMBED_BATCH) {
        let texts: Vec<String> = chunk.iter().map(|(_, t)| t.to_string()).collect();
        let vectors = embedder.embed(&texts).await?;
        let entries: Vec<(String, Vec<f64>)> = chunk
            .iter()
            .map(|(id, _)| id.to_string())
            .zip(vectors)
            .collect();
        store.append_embeddings(task, &entries)?;
    }
    Ok(())
}

/// Groups usable records into (group, prompt type, phrasing + pooled) cells
/// following the grid's axis order. Cells with no documents are skipped.
fn build_cells(
    ctx: &RunContext,
    task: TaskKind,
    records: &[ResponseRecord],
    vectors: &BTreeMap<String, Vec<f64>>,
) -> Result<Vec<Cell>> {
    let spec = ctx.grid_spec(task);
    type Key = (String, String, String, String, Phrasing);
    let mut index: BTreeMap<Key, Vec<usize>> = BTreeMap::new();
    for (idx, record) in records.iter().enumerate() {
        let persona = &record.persona;
        index
            .entry((
                persona.group.race.clone(),
                persona.group.gender.clone(),
                persona.prompt_type.role.to_string(),
                persona.prompt_type.priming.to_string(),
                persona.phrasing,
            ))
            .or_default()
            .push(idx);
    }
    let mut cells = Vec::new();
    for race in &spec.races {
        for gender in &spec.genders {
            for &role in &spec.roles {
                for &priming in &spec.primings {
                    let mut slots: Vec<Option<Phrasing>> =
                        spec.phrasings.iter().copied().map(Some).collect();
                    if spec.phrasings.len() > 1 {
                        slots.push(None);
                    }
                    for slot in slots {
                        let members: Vec<usize> = match slot {
                            Some(p) => index
                                .get(&(
                                    race.clone(),
                                    gender.clone(),
                                    role.to_string(),
                                    priming.to_string(),
                                    p,
                                ))
                                .cloned()
                                .unwrap_or_default(),
                            None => spec
                                .phrasings
                                .iter()
                                .flat_map(|&p| {
                                    index
                                        .get(&(
                                            race.clone(),
                                            gender.clone(),
                                            role.to_string(),
                                            priming.to_string(),
                                            p,
                                        ))
                                        .cloned()
                                        .unwrap_or_default()
                                })
                                .collect(),
                        };
                        if members.is_empty() {
                            warn!(
                                "metrics-open: empty cell {race}-{gender} / {role}-{priming} / {}",
                                phrasing_label(slot)
                            );
                            continue;
                        }
                        let mut texts = Vec::with_capacity(members.len());
                        let mut languages = Vec::with_capacity(members.len());
                        let mut embeddings = Vec::with_capacity(members.len());
                        for &idx in &members {
                            let record = &records[idx];
                            let vector = vectors.get(&record.job_id).ok_or_else(|| {
                                Error::Store(format!(
                                    "no embedding for job '{}' after the embed pass",
                                    record.job_id
                                ))
                            })?;
                            texts.push(record.redacted.clone().expect("usable"));
                            languages.push(record.language.clone().unwrap_or_default());
                            embeddings.push(vector.clone());
                        }
                        cells.push(Cell {
                            group: Group::new(race.clone(), gender.clone()),
                            prompt_type: PromptType::new(role, priming),
                            slot,
                            texts,
                            languages,
                            embeddings,
                        });
                    }
                }
            }
        }
    }
    Ok(cells)
}

/// Survey-task alignment: per-cell Wasserstein and majority-match means plus
/// per-group uniform-random baselines.
pub(super) fn run_metrics_closed(ctx: &RunContext) -> Result<()> {
    let Some(task) = ctx
        .config
        .tasks
        .iter()
        .copied()
        .find(|t| t.mode() == Mode::Closed)
    else {
        println!("metrics-closed: no survey task in this run");
        return Ok(());
    };
    let store = ctx.open_store()?;
    let spec = ctx.grid_spec(task);
    let filter = Filter {
        task: Some(task),
        ..Filter::default()
    };
    if store.query(&filter).next().is_none() {
        return Err(Error::Stage(format!(
            "no records for task {task}; run `collect` first"
        )));
    }

    let cells = aggregate_alignment(&store, &spec)?;
    let mut alignment_table = TsvTable::new(&[
        "task", "race", "gender", "role", "priming", "phrasing", "questions", "w1_norm", "w1_raw",
        "majority", "ties", "absent",
    ]);
    for cell in &cells {
        alignment_table.push(vec![
            task.to_string(),
            cell.group.race.clone(),
            cell.group.gender.clone(),
            cell.prompt_type.role.to_string(),
            cell.prompt_type.priming.to_string(),
            cell.phrasing.to_string(),
            cell.questions.to_string(),
            fmt_f64(cell.mean_wasserstein),
            fmt_f64(cell.mean_wasserstein_raw),
            fmt_f64(cell.mean_majority),
            cell.ties.to_string(),
            cell.absent_flags.to_string(),
        ]);
    }

    let mut baseline_table = TsvTable::new(&[
        "task",
        "race",
        "gender",
        "trials",
        "w1_mean",
        "w1_std",
        "majority_mean",
        "majority_std",
    ]);
    let mut group_index = 0u64;
    for race in &spec.races {
        for gender in &spec.genders {
            let group_id = format!("{race}-{gender}");
            let seed = ctx.config.seed.wrapping_add(group_index);
            group_index += 1;
            match random_baseline(
                &spec.questions,
                &group_id,
                ctx.config.baseline.trials,
                seed,
            ) {
                Ok(summary) => baseline_table.push(vec![
                    task.to_string(),
                    race.clone(),
                    gender.clone(),
                    summary.trials.to_string(),
                    fmt_f64(summary.wasserstein_mean),
                    fmt_f64(summary.wasserstein_std),
                    fmt_f64(summary.majority_mean),
                    fmt_f64(summary.majority_std),
                ]),
                Err(Error::Degenerate(detail)) => {
                    warn!("metrics-closed: baseline {group_id}: {detail}");
                }
                Err(other) => return Err(other),
            }
        }
    }

    let exports = ctx.exports_dir();
    alignment_table.write_if_changed(&exports.join("alignment.tsv"))?;
    baseline_table.write_if_changed(&exports.join("baseline.tsv"))?;
    println!(
        "metrics-closed: task={task} cells={} baselines={}",
        cells.len(),
        baseline_table.rows().len()
    );
    Ok(())
}
