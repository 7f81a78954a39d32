//! Batch runs over scenarios, planner kinds and seeds, and their CSV output.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::{run_with, PlanRecord, PlannerKind, RunMetrics, RunOptions};
use crate::error::Result;
use crate::grid_world::Scenario;

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteSpec {
    pub kinds: Vec<PlannerKind>,
    pub seeds: Vec<u64>,
    pub wall_budget: Option<f64>,
}

/// A run that ended in an error instead of metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct RunFailure {
    pub scenario: String,
    pub kind: PlannerKind,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, Default)]
pub struct SuiteOutput {
    pub runs: Vec<RunMetrics>,
    pub failures: Vec<RunFailure>,
}

/// Runs every (scenario, kind, seed) combination in order, calling
/// `progress` after each run. A failed run is recorded and the suite goes on.
pub fn run_suite(
    scenarios: &[Scenario],
    spec: &SuiteSpec,
    mut progress: impl FnMut(std::result::Result<&RunMetrics, &RunFailure>),
) -> SuiteOutput {
    let mut out = SuiteOutput::default();
    for scenario in scenarios {
        for &kind in &spec.kinds {
            for &seed in &spec.seeds {
                let mut opts = RunOptions::new(kind, seed);
                opts.wall_budget = spec.wall_budget;
                match run_with(scenario, &opts) {
                    Ok(a) => {
                        progress(Ok(&a.metrics));
                        out.runs.push(a.metrics);
                    }
                    Err(e) => {
                        let f = RunFailure {
                            scenario: scenario.name.clone(),
                            kind,
                            seed,
                            error: e.to_string(),
                        };
                        progress(Err(&f));
                        out.failures.push(f);
                    }
                }
            }
        }
    }
    out
}

/// Mean and sample standard deviation; the deviation is zero for fewer than
/// two values.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Metric columns are empty on rows of failed runs.
#[derive(Serialize)]
struct RunRow<'a> {
    scenario: &'a str,
    planner: &'static str,
    seed: u64,
    termination: Option<String>,
    exploration_time: Option<f64>,
    path_length: Option<f64>,
    #[serde(rename = "computational_time_planner_phases")]
    computational_time: Option<f64>,
    mapped_fraction: Option<f64>,
    iterations: Option<usize>,
    replanning_events: Option<usize>,
    collisions: Option<usize>,
    mean_clearance: Option<f64>,
    nodes: Option<usize>,
    edges: Option<usize>,
    wall_time: Option<f64>,
    error: Option<&'a str>,
}

impl<'a> RunRow<'a> {
    fn ok(r: &'a RunMetrics) -> Self {
        Self {
            scenario: &r.scenario,
            planner: r.kind.name(),
            seed: r.seed,
            termination: Some(format!("{:?}", r.outcome.termination)),
            exploration_time: Some(r.outcome.exploration_time),
            path_length: Some(r.outcome.path_length),
            computational_time: Some(r.timing.computational_time),
            mapped_fraction: Some(r.outcome.mapped_fraction),
            iterations: Some(r.outcome.iterations),
            replanning_events: Some(r.outcome.replanning_events),
            collisions: Some(r.outcome.collisions),
            mean_clearance: r.outcome.mean_clearance,
            nodes: Some(r.outcome.nodes),
            edges: Some(r.outcome.edges),
            wall_time: Some(r.timing.wall_time),
            error: None,
        }
    }

    fn failed(f: &'a RunFailure) -> Self {
        Self {
            scenario: &f.scenario,
            planner: f.kind.name(),
            seed: f.seed,
            termination: None,
            exploration_time: None,
            path_length: None,
            computational_time: None,
            mapped_fraction: None,
            iterations: None,
            replanning_events: None,
            collisions: None,
            mean_clearance: None,
            nodes: None,
            edges: None,
            wall_time: None,
            error: Some(&f.error),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub planner: &'static str,
    pub runs: usize,
    pub exploration_time_mean: f64,
    pub exploration_time_sd: f64,
    pub path_length_mean: f64,
    pub path_length_sd: f64,
    pub computational_time_mean: f64,
    pub computational_time_sd: f64,
    pub mapped_fraction_mean: f64,
    pub collisions: usize,
    pub replanning_events: usize,
    pub mean_clearance: Option<f64>,
    /// Against the optimizer-free runs of the same scenario; set on `dep` rows.
    pub time_ratio: Option<f64>,
    pub length_ratio: Option<f64>,
    pub clearance_ratio: Option<f64>,
}

/// One row per (scenario, kind), in first-seen order.
pub fn summarize(runs: &[RunMetrics]) -> Vec<Summary> {
    let mut keys: Vec<(String, PlannerKind)> = Vec::new();
    for r in runs {
        let k = (r.scenario.clone(), r.kind);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let mut rows: Vec<Summary> = keys
        .iter()
        .map(|(scenario, kind)| {
            let group: Vec<&RunMetrics> = runs
                .iter()
                .filter(|r| &r.scenario == scenario && r.kind == *kind)
                .collect();
            let col = |f: &dyn Fn(&RunMetrics) -> f64| {
                mean_sd(&group.iter().map(|r| f(r)).collect::<Vec<_>>())
            };
            let (et, et_sd) = col(&|r| r.outcome.exploration_time);
            let (pl, pl_sd) = col(&|r| r.outcome.path_length);
            let (ct, ct_sd) = col(&|r| r.timing.computational_time);
            let (mf, _) = col(&|r| r.outcome.mapped_fraction);
            let clear: Vec<f64> = group
                .iter()
                .filter_map(|r| r.outcome.mean_clearance)
                .collect();
            Summary {
                scenario: scenario.clone(),
                planner: kind.name(),
                runs: group.len(),
                exploration_time_mean: et,
                exploration_time_sd: et_sd,
                path_length_mean: pl,
                path_length_sd: pl_sd,
                computational_time_mean: ct,
                computational_time_sd: ct_sd,
                mapped_fraction_mean: mf,
                collisions: group.iter().map(|r| r.outcome.collisions).sum(),
                replanning_events: group.iter().map(|r| r.outcome.replanning_events).sum(),
                mean_clearance: (!clear.is_empty()).then(|| mean_sd(&clear).0),
                time_ratio: None,
                length_ratio: None,
                clearance_ratio: None,
            }
        })
        .collect();
    let snapshot = rows.clone();
    for row in rows
        .iter_mut()
        .filter(|r| r.planner == PlannerKind::Dep.name())
    {
        if let Some(base) = snapshot
            .iter()
            .find(|b| b.scenario == row.scenario && b.planner == PlannerKind::DepNoOpt.name())
        {
            row.time_ratio = Some(row.exploration_time_mean / base.exploration_time_mean);
            row.length_ratio = Some(row.path_length_mean / base.path_length_mean);
            row.clearance_ratio = match (row.mean_clearance, base.mean_clearance) {
                (Some(a), Some(b)) if b > 0.0 => Some(a / b),
                _ => None,
            };
        }
    }
    rows
}

#[derive(Serialize)]
struct RateRow<'a> {
    scenario: &'a str,
    planner: &'static str,
    seed: u64,
    time: f64,
    mapped_fraction: f64,
}

#[derive(Serialize)]
struct LogLine<'a> {
    scenario: &'a str,
    planner: &'static str,
    seed: u64,
    #[serde(flatten)]
    plan: &'a PlanRecord,
    compute_secs: Option<f64>,
}

/// Writes `runs.csv`, `summary.csv`, `rates.csv` and `plans.jsonl` into
/// `dir`. Computational time counts planner phases only (sampling, gain
/// evaluation, search, optimization and replanning).
pub fn write_outputs(out: &SuiteOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let runs = &out.runs;
    let mut w = csv::Writer::from_path(dir.join("runs.csv"))?;
    for r in runs {
        w.serialize(RunRow::ok(r))?;
    }
    for f in &out.failures {
        w.serialize(RunRow::failed(f))?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    for s in summarize(runs) {
        w.serialize(s)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("rates.csv"))?;
    for r in runs {
        for &(time, mapped_fraction) in &r.outcome.rate_curve {
            w.serialize(RateRow {
                scenario: &r.scenario,
                planner: r.kind.name(),
                seed: r.seed,
                time,
                mapped_fraction,
            })?;
        }
    }
    w.flush()?;

    let mut log = BufWriter::new(File::create(dir.join("plans.jsonl"))?);
    for r in runs {
        for (i, plan) in r.outcome.plans.iter().enumerate() {
            let line = LogLine {
                scenario: &r.scenario,
                planner: r.kind.name(),
                seed: r.seed,
                plan,
                compute_secs: r.timing.plan_iteration_times.get(i).copied(),
            };
            serde_json::to_writer(&mut log, &line)?;
            log.write_all(b"\n")?;
        }
    }
    log.flush()?;
    Ok(())
}
