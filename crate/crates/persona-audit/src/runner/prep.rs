//! Preprocess: extraction, redaction, refusal screening, language tagging,
//! and the judge-based role-violation screen for open-ended responses.
//!
//! The stage runs in two passes. The first is pure and annotates every
//! not-yet-preprocessed record; its results are persisted before any judge
//! call goes out, so an interrupted judge pass resumes without repeating
//! work. The second pass sends candidate texts to the judge endpoint and
//! applies the verdicts.

use futures::StreamExt;
use log::{info, warn};

use crate::error::{Error, Result};
use crate::gateway::GatewayClient;
use crate::matrix::Mode;
use crate::preprocess::{
    apply_role_screen, bundled_profiles, extract_structured_field, identify_language, is_refusal,
    redact_identity, RedactionLexicon,
};
use crate::store::{
    ExclusionReason, Filter, RecordStatus, ResponseRecord, RoleViolation, StatusKind,
};

use super::config::RunContext;

pub(super) async fn run_preprocess(ctx: &RunContext) -> Result<()> {
    let open_tasks: Vec<_> = ctx
        .config
        .tasks
        .iter()
        .copied()
        .filter(|t| t.mode() == Mode::Open)
        .collect();
    if open_tasks.is_empty() {
        println!("preprocess: no open-ended tasks in this run");
        return Ok(());
    }
    let mut store = ctx.open_store()?;
    let judge = GatewayClient::new(ctx.config.judge.clone())?;
    let profiles = bundled_profiles();

    for task in open_tasks {
        let filter = Filter {
            task: Some(task),
            ..Filter::default()
        };
        let mut records: Vec<ResponseRecord> = store.query(&filter).cloned().collect();
        if records.is_empty() {
            return Err(Error::Stage(format!(
                "no records for task {task}; run `collect` first"
            )));
        }

        // Pass 1: pure annotations for records collect produced but nothing
        // preprocessed yet.
        let mut extracted_now = 0usize;
        let mut refusals = 0usize;
        let mut extraction_failures = 0usize;
        for record in &mut records {
            let pending = record.status == RecordStatus::Ok
                && record.raw_text.is_some()
                && record.extracted.is_none();
            if !pending {
                continue;
            }
            let raw = record.raw_text.clone().expect("pending record has text");
            let extraction = match extract_structured_field(&raw, task) {
                Ok(extraction) => extraction,
                Err(_) => {
                    extraction_failures += 1;
                    record.status = RecordStatus::Excluded {
                        reason: ExclusionReason::ExtractionFailure,
                    };
                    continue;
                }
            };
            let lexicon = RedactionLexicon::for_persona(&record.persona, task, ctx.data)?;
            let redacted = redact_identity(&extraction.text, &lexicon);
            let guess = identify_language(&redacted, profiles);
            if is_refusal(&extraction.text) {
                refusals += 1;
                record.status = RecordStatus::Excluded {
                    reason: ExclusionReason::Refusal,
                };
            }
            record.username = extraction.username;
            record.extraction_fallback = extraction.fallback;
            record.language = Some(guess.code);
            record.extracted = Some(extraction.text);
            record.redacted = Some(redacted);
            extracted_now += 1;
        }
        store.replace_task_records(task, records.clone())?;

        // Pass 2: judge screen over kept records that still lack a verdict.
        let candidates: Vec<usize> = records
            .iter()
            .enumerate()
            .filter(|(_, r)| {
                r.status == RecordStatus::Ok
                    && r.extracted.is_some()
                    && r.role_violation == RoleViolation::NotJudged
            })
            .map(|(idx, _)| idx)
            .collect();
        info!("preprocess: task={task} judging {} records", candidates.len());
        let judge_ref = &judge;
        let texts: Vec<(usize, String)> = candidates
            .iter()
            .map(|&idx| {
                (
                    idx,
                    records[idx].extracted.clone().expect("candidate extracted"),
                )
            })
            .collect();
        let mut verdicts = futures::stream::iter(texts.into_iter().map(|(idx, text)| async move {
            (idx, judge_ref.judge_role_violation(&text).await)
        }))
        .buffer_unordered(ctx.config.judge.max_in_flight.max(1));
        let mut judged = 0usize;
        let mut ai = 0usize;
        let mut judge_error = None;
        while let Some((idx, verdict)) = verdicts.next().await {
            match verdict {
                Ok(v) => {
                    judged += 1;
                    apply_role_screen(&mut records[idx], Some(v));
                    if records[idx].role_violation == RoleViolation::Ai {
                        ai += 1;
                    }
                }
                Err(e) => {
                    warn!("preprocess: judge call failed: {e}");
                    judge_error = Some(e);
                    break;
                }
            }
        }
        drop(verdicts);
        store.replace_task_records(task, records)?;
        if let Some(e) = judge_error {
            return Err(e);
        }

        let kept = store
            .query(&Filter {
                task: Some(task),
                status: Some(StatusKind::Ok),
                ..Filter::default()
            })
            .count();
        println!(
            "preprocess: task={task} extracted={extracted_now} refusals={refusals} \
             extraction_failures={extraction_failures} judged={judged} ai_violations={ai} kept={kept}"
        );
    }
    Ok(())
}
