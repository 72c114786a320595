//! The validation stage and the final report assembly.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::gateway::GatewayClient;
use crate::matrix::{expand_grid, plan, Mode, TaskKind};
use crate::store::{ExclusionReason, RecordStatus, Store};

use super::config::RunContext;
use super::tsv::{fmt_f64, write_if_changed, TsvTable, NA};

/// Why a rerun against a live endpoint will not reproduce stored responses,
/// and what is deterministic instead. Quoted in the report and the README.
pub const REPRODUCIBILITY_NOTE: &str = "\
Live model endpoints are not bit-reproducible: provider-side model updates,
hardware nondeterminism, and sampling mean a fresh collection pass will not
recreate the stored responses byte for byte, even with identical seeds. What
is guaranteed instead: every artifact under exports/ and reports/ is a
deterministic function of the store, so rerunning the metric, analyze, and
report stages rewrites no bytes; and the full pipeline against the bundled
mock endpoint is deterministic end to end given the config seed.";

/// The replay procedure for checking published results, quoted in the
/// report and the README.
pub const REPLAY_PROCEDURE: &[&str] = &[
    "point [endpoint], [embedding], and [judge] at the models under audit",
    "supply the published survey questions (with per-group human response \
     distributions) via questions_path",
    "leave the axis lists empty (full grid) and keep seeds_per_cell = 100",
    "run the stages in order: plan, collect, preprocess, metrics-open, \
     metrics-closed, analyze, validate-logprobs, report",
    "compare exports/*.tsv against the published tables",
];

/// Cross-checks the log-probability scoring of the first configured survey
/// questions against sampled generations.
pub(super) async fn run_validate_logprobs(ctx: &RunContext) -> Result<()> {
    let Some(task) = ctx
        .config
        .tasks
        .iter()
        .copied()
        .find(|t| t.mode() == Mode::Closed)
    else {
        return Err(Error::Stage(
            "validate-logprobs needs the survey task in `tasks`".to_string(),
        ));
    };
    let spec = ctx.grid_spec(task);
    let jobs = expand_grid(ctx.data, &spec)?;
    let client = GatewayClient::new(ctx.config.endpoint.clone())?;
    let mut table = TsvTable::new(&["question_id", "samples", "unparsed", "w1_raw", "w1_norm"]);
    for question in ctx.questions.iter().take(ctx.config.validation.questions) {
        let job = jobs
            .iter()
            .find(|j| j.question_id.as_deref() == Some(question.id.as_str()))
            .ok_or_else(|| {
                Error::Stage(format!("the grid has no job for question '{}'", question.id))
            })?;
        let validation = client
            .validate_logprobs(job, question, ctx.config.validation.samples)
            .await?;
        println!(
            "validate-logprobs: question={} samples={} unparsed={} w1_norm={}",
            validation.question_id,
            validation.samples,
            validation.unparsed,
            fmt_f64(validation.wasserstein.normalized),
        );
        table.push(vec![
            validation.question_id.clone(),
            validation.samples.to_string(),
            validation.unparsed.to_string(),
            fmt_f64(validation.wasserstein.raw),
            fmt_f64(validation.wasserstein.normalized),
        ]);
    }
    table.write_if_changed(&ctx.exports_dir().join("logprob_validation.tsv"))?;
    Ok(())
}

fn exclusion_label(reason: ExclusionReason) -> &'static str {
    match reason {
        ExclusionReason::Refusal => "refusal",
        ExclusionReason::AiIdentity => "ai-identity",
        ExclusionReason::ExtractionFailure => "extraction-failure",
        ExclusionReason::JudgeUnresolved => "judge-unresolved",
    }
}

#[derive(Default)]
struct TaskCounts {
    total: usize,
    ok: usize,
    failed: usize,
    excluded: BTreeMap<&'static str, usize>,
}

fn count_statuses(store: &Store, task: TaskKind) -> TaskCounts {
    let mut counts = TaskCounts::default();
    for record in store.records().filter(|r| r.task == task) {
        counts.total += 1;
        match &record.status {
            RecordStatus::Ok => counts.ok += 1,
            RecordStatus::Failed { .. } => counts.failed += 1,
            RecordStatus::Excluded { reason } => {
                *counts.excluded.entry(exclusion_label(*reason)).or_default() += 1;
            }
        }
    }
    counts
}

/// Pads every column to its widest cell; two spaces between columns.
fn format_table(table: &TsvTable) -> String {
    let mut widths: Vec<usize> = table.columns().iter().map(String::len).collect();
    for row in table.rows() {
        for (idx, cell) in row.iter().enumerate() {
            widths[idx] = widths[idx].max(cell.len());
        }
    }
    let fmt_row = |cells: &[String]| -> String {
        let padded: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(idx, cell)| format!("{cell:<width$}", width = widths[idx]))
            .collect();
        padded.join("  ").trim_end().to_string()
    };
    let mut out = fmt_row(table.columns());
    out.push('\n');
    for row in table.rows() {
        out.push_str(&fmt_row(row));
        out.push('\n');
    }
    out
}

fn section(out: &mut String, title: &str) {
    out.push('\n');
    out.push_str(title);
    out.push('\n');
    out.push_str(&"-".repeat(title.len()));
    out.push('\n');
}

/// Pushes a formatted export table, or a pointer to the stage that would
/// produce it.
fn export_section(out: &mut String, title: &str, path: &Path, produced_by: &str) -> Result<Option<TsvTable>> {
    section(out, title);
    if !path.exists() {
        out.push_str(&format!("not computed; run `{produced_by}`\n"));
        return Ok(None);
    }
    let table = TsvTable::load(path)?;
    if table.is_empty() {
        out.push_str("(no rows)\n");
    } else {
        out.push_str(&format_table(&table));
    }
    Ok(Some(table))
}

/// Converts a TSV into an array of JSON objects; numeric cells become
/// numbers, `NA` becomes null.
fn table_json(table: &TsvTable) -> Value {
    let rows: Vec<Value> = table
        .rows()
        .iter()
        .map(|row| {
            let map: serde_json::Map<String, Value> = table
                .columns()
                .iter()
                .zip(row)
                .map(|(column, cell)| (column.clone(), cell_json(cell)))
                .collect();
            Value::Object(map)
        })
        .collect();
    Value::Array(rows)
}

fn cell_json(cell: &str) -> Value {
    if cell == NA {
        return Value::Null;
    }
    if let Ok(int) = cell.parse::<i64>() {
        return json!(int);
    }
    if let Ok(float) = cell.parse::<f64>() {
        return json!(float);
    }
    match cell {
        "true" => json!(true),
        "false" => json!(false),
        other => json!(other),
    }
}

/// Assembles `reports/report.txt` and `reports/summary.json` from the store
/// counts and whatever exports exist. Deterministic: no timestamps, fixed
/// float formatting.
pub(super) fn run_report(ctx: &RunContext) -> Result<()> {
    let store = ctx.open_store()?;
    let exports = ctx.exports_dir();
    let mut out = String::new();
    out.push_str("persona audit report\n");
    out.push_str("====================\n\n");
    out.push_str(&format!("run:   {}\n", store.manifest().run_id));
    out.push_str(&format!("model: {}\n", store.manifest().model));

    section(&mut out, "plan");
    let mut plan_json = serde_json::Map::new();
    for &task in &ctx.config.tasks {
        let spec = ctx.grid_spec(task);
        let summary = plan(ctx.data, &spec)?;
        out.push_str(&format!(
            "task={} groups={} prompt_types={} phrasings={} questions={} prompt_cells={} jobs={}\n",
            summary.task,
            summary.groups,
            summary.prompt_types,
            summary.phrasings,
            summary.questions,
            summary.prompt_cells,
            summary.jobs
        ));
        plan_json.insert(task.to_string(), serde_json::to_value(&summary)?);
    }

    section(&mut out, "collection");
    let mut tasks_json = serde_json::Map::new();
    for &task in &ctx.config.tasks {
        let counts = count_statuses(&store, task);
        let excluded_total: usize = counts.excluded.values().sum();
        out.push_str(&format!(
            "task={} total={} ok={} failed={} excluded={}",
            task, counts.total, counts.ok, counts.failed, excluded_total
        ));
        for (label, n) in &counts.excluded {
            out.push_str(&format!(" {label}={n}"));
        }
        out.push('\n');
        tasks_json.insert(
            task.to_string(),
            json!({
                "total": counts.total,
                "ok": counts.ok,
                "failed": counts.failed,
                "excluded": counts.excluded,
            }),
        );
    }

    let mut summary = serde_json::Map::new();
    summary.insert("run_id".to_string(), json!(store.manifest().run_id));
    summary.insert("model".to_string(), json!(store.manifest().model));
    summary.insert("plan".to_string(), Value::Object(plan_json));
    summary.insert("tasks".to_string(), Value::Object(tasks_json));

    let sections: [(&str, &str, &str, &str); 7] = [
        ("group means", "group_means.tsv", "analyze", "group_means"),
        (
            "prompt-type means",
            "prompt_type_means.tsv",
            "analyze",
            "prompt_type_means",
        ),
        ("disparity", "disparity.tsv", "analyze", "disparity"),
        ("regressions", "regressions.tsv", "analyze", "regressions"),
        ("alignment", "alignment.tsv", "metrics-closed", "alignment"),
        (
            "random baselines",
            "baseline.tsv",
            "metrics-closed",
            "baseline",
        ),
        (
            "log-probability validation",
            "logprob_validation.tsv",
            "validate-logprobs",
            "logprob_validation",
        ),
    ];
    for (title, file, stage, key) in sections {
        if let Some(table) = export_section(&mut out, title, &exports.join(file), stage)? {
            summary.insert(key.to_string(), table_json(&table));
        }
    }

    section(&mut out, "reproducibility");
    out.push_str(REPRODUCIBILITY_NOTE);
    out.push_str("\n\nreplay procedure:\n");
    for (idx, step) in REPLAY_PROCEDURE.iter().enumerate() {
        out.push_str(&format!("  {}. {step}\n", idx + 1));
    }

    let reports = ctx.reports_dir();
    write_if_changed(&reports.join("report.txt"), &out)?;
    let mut summary_body = serde_json::to_string_pretty(&Value::Object(summary))?;
    summary_body.push('\n');
    write_if_changed(&reports.join("summary.json"), &summary_body)?;
    println!(
        "report: wrote {} and {}",
        reports.join("report.txt").display(),
        reports.join("summary.json").display()
    );
    Ok(())
}
