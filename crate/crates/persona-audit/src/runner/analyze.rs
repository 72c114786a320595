//! Analyze: turns the per-cell metric exports into group means, prompt-type
//! means, disparity summaries, and OLS regressions.
//!
//! Works entirely from the `exports/` tables, so it can rerun without the
//! store (or the endpoints) being reachable. Pooled-phrasing rows are view
//! aggregates of the per-phrasing rows and are excluded here to avoid double
//! counting.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::stats::{
    encode_design, group_disparity_std, min_max_normalize, ols_fit, stars, FactorSpec, Observation,
};

use super::config::RunContext;
use super::tsv::{fmt_f64, TsvTable, NA};

/// One metric value at full cell granularity.
#[derive(Debug, Clone)]
struct LongRow {
    scope: &'static str,
    metric: String,
    task: String,
    race: String,
    gender: String,
    role: String,
    priming: String,
    phrasing: String,
    value: f64,
}

impl LongRow {
    fn group_id(&self) -> String {
        format!("{}-{}", self.race, self.gender)
    }
}

pub(super) fn run_analyze(ctx: &RunContext) -> Result<()> {
    let exports = ctx.exports_dir();
    let mut rows = Vec::new();
    let open_path = exports.join("open_metrics.tsv");
    if open_path.exists() {
        rows.extend(load_open_rows(&open_path)?);
        let classifier_path = exports.join("classifier.tsv");
        if classifier_path.exists() {
            rows.extend(load_classifier_rows(&classifier_path)?);
        }
    }
    let alignment_path = exports.join("alignment.tsv");
    if alignment_path.exists() {
        rows.extend(load_alignment_rows(&alignment_path)?);
    }
    if rows.is_empty() {
        return Err(Error::Stage(
            "no metric exports found; run `metrics-open` or `metrics-closed` first".to_string(),
        ));
    }

    write_group_means(&rows, &exports.join("group_means.tsv"))?;
    write_prompt_type_means(&rows, &exports.join("prompt_type_means.tsv"))?;
    let disparities = write_disparity(&rows, &exports.join("disparity.tsv"))?;
    write_regressions(&rows, &disparities, &exports.join("regressions.tsv"))?;
    println!("analyze: {} metric rows in", rows.len());
    Ok(())
}

/// Metric keys of `open_metrics.tsv` are every column after the coordinate
/// and doc-count columns.
fn load_open_rows(path: &Path) -> Result<Vec<LongRow>> {
    let table = TsvTable::load(path)?;
    let coords = open_coords(&table)?;
    let skip = [
        "task", "race", "gender", "role", "priming", "phrasing", "docs",
    ];
    let metric_cols: Vec<(usize, String)> = table
        .columns()
        .iter()
        .enumerate()
        .filter(|(_, name)| !skip.contains(&name.as_str()))
        .map(|(idx, name)| (idx, name.clone()))
        .collect();
    let mut rows = Vec::new();
    for raw in table.rows() {
        if raw[coords.phrasing] == "pooled" {
            continue;
        }
        for (idx, metric) in &metric_cols {
            if raw[*idx] == NA {
                continue;
            }
            rows.push(LongRow {
                scope: "open",
                metric: metric.clone(),
                task: raw[coords.task].clone(),
                race: raw[coords.race].clone(),
                gender: raw[coords.gender].clone(),
                role: raw[coords.role].clone(),
                priming: raw[coords.priming].clone(),
                phrasing: raw[coords.phrasing].clone(),
                value: parse_value(&raw[*idx], metric, path)?,
            });
        }
    }
    Ok(rows)
}

fn load_classifier_rows(path: &Path) -> Result<Vec<LongRow>> {
    let table = TsvTable::load(path)?;
    let coords = open_coords(&table)?;
    let accuracy = table.column("accuracy")?;
    let mut rows = Vec::new();
    for raw in table.rows() {
        if raw[coords.phrasing] == "pooled" {
            continue;
        }
        rows.push(LongRow {
            scope: "open",
            metric: "classifier_accuracy".to_string(),
            task: raw[coords.task].clone(),
            race: raw[coords.race].clone(),
            gender: raw[coords.gender].clone(),
            role: raw[coords.role].clone(),
            priming: raw[coords.priming].clone(),
            phrasing: raw[coords.phrasing].clone(),
            value: parse_value(&raw[accuracy], "accuracy", path)?,
        });
    }
    Ok(rows)
}

fn load_alignment_rows(path: &Path) -> Result<Vec<LongRow>> {
    let table = TsvTable::load(path)?;
    let coords = open_coords(&table)?;
    let mut rows = Vec::new();
    for metric in ["w1_norm", "majority"] {
        let col = table.column(metric)?;
        for raw in table.rows() {
            rows.push(LongRow {
                scope: "closed",
                metric: metric.to_string(),
                task: raw[coords.task].clone(),
                race: raw[coords.race].clone(),
                gender: raw[coords.gender].clone(),
                role: raw[coords.role].clone(),
                priming: raw[coords.priming].clone(),
                phrasing: raw[coords.phrasing].clone(),
                value: parse_value(&raw[col], metric, path)?,
            });
        }
    }
    Ok(rows)
}

struct Coords {
    task: usize,
    race: usize,
    gender: usize,
    role: usize,
    priming: usize,
    phrasing: usize,
}

fn open_coords(table: &TsvTable) -> Result<Coords> {
    Ok(Coords {
        task: table.column("task")?,
        race: table.column("race")?,
        gender: table.column("gender")?,
        role: table.column("role")?,
        priming: table.column("priming")?,
        phrasing: table.column("phrasing")?,
    })
}

fn parse_value(cell: &str, metric: &str, path: &Path) -> Result<f64> {
    cell.parse::<f64>().map_err(|_| {
        Error::Data(format!(
            "{}: metric '{metric}' holds non-numeric value {cell:?}",
            path.display()
        ))
    })
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Scope, then metric, sorted — the iteration order of every output table.
fn scoped_metrics(rows: &[LongRow]) -> Vec<(&'static str, String)> {
    let mut out: Vec<(&'static str, String)> = rows
        .iter()
        .map(|r| (r.scope, r.metric.clone()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    out.sort();
    out
}

/// Per-group means with a min–max normalized column (Fig-2-style view).
fn write_group_means(rows: &[LongRow], path: &Path) -> Result<()> {
    let mut table = TsvTable::new(&[
        "scope",
        "metric",
        "race",
        "gender",
        "cells",
        "mean",
        "normalized",
        "degenerate",
    ]);
    for (scope, metric) in scoped_metrics(rows) {
        let mut by_group: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
        for row in rows.iter().filter(|r| r.scope == scope && r.metric == metric) {
            by_group
                .entry((row.race.clone(), row.gender.clone()))
                .or_default()
                .push(row.value);
        }
        let means: Vec<f64> = by_group.values().map(|v| mean(v)).collect();
        let mut series = BTreeMap::new();
        series.insert(metric.clone(), means.clone());
        let normalized = &min_max_normalize(&series)[&metric];
        for (idx, ((race, gender), values)) in by_group.iter().enumerate() {
            table.push(vec![
                scope.to_string(),
                metric.clone(),
                race.clone(),
                gender.clone(),
                values.len().to_string(),
                fmt_f64(means[idx]),
                fmt_f64(normalized.values[idx]),
                normalized.degenerate.to_string(),
            ]);
        }
    }
    table.write_if_changed(path)?;
    Ok(())
}

/// Per-prompt-type means across groups, tasks, and phrasings (Fig-3-style
/// view).
fn write_prompt_type_means(rows: &[LongRow], path: &Path) -> Result<()> {
    let mut table = TsvTable::new(&["scope", "metric", "role", "priming", "cells", "mean"]);
    for (scope, metric) in scoped_metrics(rows) {
        let mut by_type: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
        for row in rows.iter().filter(|r| r.scope == scope && r.metric == metric) {
            by_type
                .entry((row.role.clone(), row.priming.clone()))
                .or_default()
                .push(row.value);
        }
        for ((role, priming), values) in &by_type {
            table.push(vec![
                scope.to_string(),
                metric.clone(),
                role.clone(),
                priming.clone(),
                values.len().to_string(),
                fmt_f64(mean(values)),
            ]);
        }
    }
    table.write_if_changed(path)?;
    Ok(())
}

/// Across-group spread per prompt cell. Returned as long rows (scope
/// `disparity-open` / `disparity-closed`) so the regressions can model how
/// prompt design drives disparity.
fn write_disparity(rows: &[LongRow], path: &Path) -> Result<Vec<LongRow>> {
    let mut table = TsvTable::new(&[
        "scope", "metric", "task", "role", "priming", "phrasing", "groups", "disparity",
    ]);
    let mut out = Vec::new();
    for (scope, metric) in scoped_metrics(rows) {
        let mut by_cell: BTreeMap<(String, String, String, String), BTreeMap<String, f64>> =
            BTreeMap::new();
        for row in rows.iter().filter(|r| r.scope == scope && r.metric == metric) {
            by_cell
                .entry((
                    row.task.clone(),
                    row.role.clone(),
                    row.priming.clone(),
                    row.phrasing.clone(),
                ))
                .or_default()
                .insert(row.group_id(), row.value);
        }
        for ((task, role, priming, phrasing), by_group) in &by_cell {
            let Some(disparity) = group_disparity_std(by_group) else {
                continue;
            };
            table.push(vec![
                scope.to_string(),
                metric.clone(),
                task.clone(),
                role.clone(),
                priming.clone(),
                phrasing.clone(),
                by_group.len().to_string(),
                fmt_f64(disparity),
            ]);
            out.push(LongRow {
                scope: if scope == "open" {
                    "disparity-open"
                } else {
                    "disparity-closed"
                },
                metric: metric.clone(),
                task: task.clone(),
                race: String::new(),
                gender: String::new(),
                role: role.clone(),
                priming: priming.clone(),
                phrasing: phrasing.clone(),
                value: disparity,
            });
        }
    }
    table.write_if_changed(path)?;
    Ok(out)
}

/// Preferred reference levels; the first observed level (sorted) stands in
/// when a preferred one is absent from the data.
fn factor_from(rows: &[&LongRow], name: &str, preferred: &str) -> Option<FactorSpec> {
    let observed: BTreeSet<&str> = rows
        .iter()
        .map(|r| match name {
            "race" => r.race.as_str(),
            "gender" => r.gender.as_str(),
            "role" => r.role.as_str(),
            "priming" => r.priming.as_str(),
            "phrasing" => r.phrasing.as_str(),
            "task" => r.task.as_str(),
            other => unreachable!("unknown factor {other}"),
        })
        .collect();
    if observed.len() < 2 {
        return None;
    }
    let reference = if observed.contains(preferred) {
        preferred.to_string()
    } else {
        observed.iter().next().unwrap().to_string()
    };
    let mut levels = vec![reference.clone()];
    levels.extend(
        observed
            .iter()
            .filter(|l| **l != reference)
            .map(|l| l.to_string()),
    );
    Some(FactorSpec::new(
        name,
        &reference,
        &levels.iter().map(String::as_str).collect::<Vec<_>>(),
    ))
}

const FACTOR_PREFERENCES: [(&str, &str); 6] = [
    ("race", "white"),
    ("gender", "male"),
    ("role", "direct"),
    ("priming", "explicit"),
    ("phrasing", "v1"),
    ("task", "social_media_bio"),
];

/// Fits one OLS model per (scope, metric): cell metric values on demographic
/// and prompt-design factors, and cell disparities on prompt-design factors.
fn write_regressions(rows: &[LongRow], disparities: &[LongRow], path: &Path) -> Result<()> {
    let mut table = TsvTable::new(&[
        "scope",
        "metric",
        "n",
        "df",
        "r_squared",
        "column",
        "estimate",
        "std_error",
        "t_value",
        "p_value",
        "stars",
    ]);
    let mut all: Vec<&LongRow> = rows.iter().collect();
    all.extend(disparities.iter());
    let mut scoped: Vec<(&'static str, String)> = all
        .iter()
        .map(|r| (r.scope, r.metric.clone()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    scoped.sort();
    for (scope, metric) in scoped {
        let subset: Vec<&LongRow> = all
            .iter()
            .filter(|r| r.scope == scope && r.metric == metric)
            .copied()
            .collect();
        let demographic = !scope.starts_with("disparity");
        let factors: Vec<FactorSpec> = FACTOR_PREFERENCES
            .iter()
            .filter(|(name, _)| demographic || (*name != "race" && *name != "gender"))
            .filter_map(|(name, preferred)| factor_from(&subset, name, preferred))
            .collect();
        if factors.is_empty() {
            warn!("analyze: {scope}/{metric}: no factor varies, skipping regression");
            continue;
        }
        let observations: Vec<Observation> = subset
            .iter()
            .map(|row| {
                let mut levels = BTreeMap::new();
                for factor in &factors {
                    let level = match factor.name.as_str() {
                        "race" => &row.race,
                        "gender" => &row.gender,
                        "role" => &row.role,
                        "priming" => &row.priming,
                        "phrasing" => &row.phrasing,
                        "task" => &row.task,
                        other => unreachable!("unknown factor {other}"),
                    };
                    levels.insert(factor.name.clone(), level.clone());
                }
                Observation {
                    label: format!(
                        "{}/{}-{}/{}-{}/{}",
                        row.task, row.race, row.gender, row.role, row.priming, row.phrasing
                    ),
                    levels,
                    response: row.value,
                }
            })
            .collect();
        let design = match encode_design(&observations, &factors) {
            Ok(design) => design,
            Err(e) => {
                warn!("analyze: {scope}/{metric}: {e}, skipping regression");
                continue;
            }
        };
        let result = match ols_fit(&design) {
            Ok(result) => result,
            Err(e) => {
                warn!("analyze: {scope}/{metric}: {e}, skipping regression");
                continue;
            }
        };
        for coefficient in &result.coefficients {
            table.push(vec![
                scope.to_string(),
                metric.clone(),
                observations.len().to_string(),
                result.df.to_string(),
                fmt_f64(result.r_squared),
                coefficient.column.clone(),
                fmt_f64(coefficient.estimate),
                fmt_f64(coefficient.std_error),
                fmt_f64(coefficient.t_value),
                fmt_f64(coefficient.p_value),
                stars(coefficient.p_value).to_string(),
            ]);
        }
    }
    table.write_if_changed(path)?;
    Ok(())
}
