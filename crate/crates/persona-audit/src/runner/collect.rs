//! Plan and collect: grid expansion, dry-run counts, and resumable
//! response collection against the audited endpoint.

use std::collections::BTreeMap;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use futures::StreamExt;
use log::{info, warn};

use crate::error::{Error, Result};
use crate::gateway::GatewayClient;
use crate::matrix::{expand_grid, plan, Mode, PromptJob, SurveyQuestion};
use crate::store::ResponseRecord;

use super::config::RunContext;
use super::tsv::write_if_changed;

pub(super) fn now_unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Prints the per-task job counts and records them in `reports/plan.txt`.
pub(super) fn run_plan(ctx: &RunContext) -> Result<()> {
    let mut lines = Vec::new();
    for &task in &ctx.config.tasks {
        let spec = ctx.grid_spec(task);
        let s = plan(ctx.data, &spec)?;
        let line = format!(
            "plan: task={} groups={} prompt_types={} phrasings={} questions={} prompt_cells={} jobs={}",
            s.task, s.groups, s.prompt_types, s.phrasings, s.questions, s.prompt_cells, s.jobs
        );
        println!("{line}");
        lines.push(line);
    }
    let mut body = lines.join("\n");
    body.push('\n');
    write_if_changed(&ctx.reports_dir().join("plan.txt"), &body)?;
    Ok(())
}

/// Collects every job the store does not hold yet. Transport and HTTP
/// failures become `Failed` records (the run keeps going); configuration
/// and capability errors abort.
pub(super) async fn run_collect(ctx: &RunContext) -> Result<()> {
    let client = GatewayClient::new(ctx.config.endpoint.clone())?;
    let mut store = ctx.open_or_create_store()?;
    let questions: BTreeMap<&str, &SurveyQuestion> = ctx
        .questions
        .iter()
        .map(|q| (q.id.as_str(), q))
        .collect();
    for &task in &ctx.config.tasks {
        let spec = ctx.grid_spec(task);
        let jobs = expand_grid(ctx.data, &spec)?;
        let total = jobs.len();
        let pending = store.resume(&ctx.config.run_id, &jobs)?;
        info!(
            "collect: task={task} jobs={total} pending={}",
            pending.len()
        );
        let client = &client;
        let questions = &questions;
        let mut outcomes = futures::stream::iter(pending.into_iter().map(|job| async move {
            let outcome = collect_one(client, questions, &job).await;
            (job, outcome)
        }))
        .buffer_unordered(ctx.config.endpoint.max_in_flight.max(1));
        let mut ok = 0usize;
        let mut failed = 0usize;
        while let Some((job, outcome)) = outcomes.next().await {
            let record = match outcome {
                Ok(record) => {
                    ok += 1;
                    record
                }
                Err(err @ (Error::Transport { .. } | Error::Http { .. })) => {
                    failed += 1;
                    warn!("collect: job {} failed: {err}", job.id);
                    let attempts = match &err {
                        Error::Transport { attempts, .. } => *attempts,
                        _ => 1,
                    };
                    ResponseRecord::failed(
                        job.id.clone(),
                        job.persona.clone(),
                        job.task,
                        job.question_id.clone(),
                        job.seed,
                        err.to_string(),
                        attempts,
                        now_unix_ms(),
                    )
                }
                Err(other) => return Err(other),
            };
            store.persist(record)?;
        }
        println!("collect: task={task} total={total} new_ok={ok} new_failed={failed}");
    }
    Ok(())
}

async fn collect_one(
    client: &GatewayClient,
    questions: &BTreeMap<&str, &SurveyQuestion>,
    job: &PromptJob,
) -> Result<ResponseRecord> {
    if job.task.mode() == Mode::Closed {
        let qid = job.question_id.as_deref().ok_or_else(|| {
            Error::Config(format!("survey job '{}' lacks a question id", job.id))
        })?;
        let question = questions.get(qid).ok_or_else(|| {
            Error::Config(format!(
                "job '{}' references question '{qid}' which is not in the question file",
                job.id
            ))
        })?;
        let start = Instant::now();
        let logprobs = client.option_logprobs(job, &question.options).await?;
        Ok(ResponseRecord::collected_options(
            job.id.clone(),
            job.persona.clone(),
            job.seed,
            logprobs,
            1,
            now_unix_ms(),
            start.elapsed().as_millis() as u64,
        ))
    } else {
        let outcome = client.complete_chat(job).await?;
        Ok(ResponseRecord::collected_text(
            job.id.clone(),
            job.persona.clone(),
            job.task,
            job.seed,
            outcome.text,
            outcome.attempts,
            now_unix_ms(),
            outcome.latency_ms,
        ))
    }
}
