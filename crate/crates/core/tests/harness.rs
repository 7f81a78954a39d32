use std::path::PathBuf;

use dep_core::geometry::Aabb;
use dep_core::harness::suite::{run_suite, summarize, write_outputs, SuiteSpec};
use dep_core::harness::{run_with, PlannerKind, RunOptions, Termination};
use dep_core::{Scenario, Vec3};

fn shipped(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(format!("{name}.toml"));
    Scenario::load(path).unwrap()
}

const CHAMBER: &str = r#"
    name = "chamber"
    seed = 4
    bounds = { min = [0.0, 0.0, 0.0], max = [2.4, 2.0, 1.6] }
    robot_start = { position = [1.2, 1.0, 0.8], yaw = 0.0 }
"#;

#[test]
fn sealed_chamber_is_fully_mapped() {
    let s = Scenario::from_toml(CHAMBER).unwrap();
    for kind in PlannerKind::ALL {
        let m = run_with(&s, &RunOptions::new(kind, 1)).unwrap().metrics;
        assert!(
            matches!(
                m.outcome.termination,
                Termination::Converged | Termination::NoFrontiers
            ),
            "{kind}: {:?}",
            m.outcome.termination
        );
        // the baseline leaves frontier clusters below its minimum size
        let floor = if kind == PlannerKind::Frontier {
            0.95
        } else {
            0.99
        };
        assert!(
            m.outcome.mapped_fraction > floor,
            "{kind}: {}",
            m.outcome.mapped_fraction
        );
        assert_eq!(m.outcome.collisions, 0);
        assert!(m.outcome.reachable_voxels > 0);
    }
}

#[test]
fn path_length_is_the_flown_distance() {
    let a = run_with(&shipped("room"), &RunOptions::new(PlannerKind::Dep, 2)).unwrap();
    let flown: f64 = a.trace.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
    assert!((a.metrics.outcome.path_length - flown).abs() < 1e-6);
    assert!(flown > 0.0);
}

#[test]
fn every_replan_is_timed_and_the_map_denominator_is_fixed() {
    let s = shipped("room_dynamic");
    let mut opts = RunOptions::new(PlannerKind::Dep, 1);
    opts.max_sim_time = Some(60.0);
    let m = run_with(&s, &opts).unwrap().metrics;
    assert_eq!(m.outcome.termination, Termination::SimTimeLimit);
    assert!(m.outcome.replanning_events > 0);
    assert_eq!(m.outcome.replanning_events, m.timing.replanning_times.len());
    let longer = {
        opts.max_sim_time = Some(90.0);
        run_with(&s, &opts).unwrap().metrics
    };
    assert_eq!(m.outcome.reachable_voxels, longer.outcome.reachable_voxels);
    // the shorter run is a prefix of the longer one
    assert_eq!(
        m.outcome.plans[..],
        longer.outcome.plans[..m.outcome.plans.len()]
    );
}

#[test]
fn rate_curve_is_monotone_in_time() {
    let m = run_with(&shipped("room"), &RunOptions::new(PlannerKind::Dep, 3))
        .unwrap()
        .metrics;
    let c = &m.outcome.rate_curve;
    assert!(c.windows(2).all(|w| w[0].0 < w[1].0));
    assert!(c.iter().all(|&(_, f)| (0.0..=1.0).contains(&f)));
}

#[test]
fn suite_counts_rows_and_fills_ratios() {
    let s = shipped("room");
    let spec = SuiteSpec {
        kinds: vec![PlannerKind::Dep],
        seeds: vec![1, 2, 3],
        wall_budget: None,
    };
    let mut seen = 0;
    let out = run_suite(std::slice::from_ref(&s), &spec, |_| seen += 1);
    assert_eq!((seen, out.runs.len(), out.failures.len()), (3, 3, 0));
    assert_eq!(summarize(&out.runs).len(), 1);

    let spec = SuiteSpec {
        kinds: vec![PlannerKind::Dep, PlannerKind::DepNoOpt],
        seeds: vec![1],
        wall_budget: None,
    };
    let out = run_suite(&[s], &spec, |_| {});
    let rows = summarize(&out.runs);
    let dep = rows.iter().find(|r| r.planner == "dep").unwrap();
    let base = rows.iter().find(|r| r.planner == "dep_no_opt").unwrap();
    assert_eq!(
        dep.time_ratio,
        Some(dep.exploration_time_mean / base.exploration_time_mean)
    );
    assert!(dep.length_ratio.is_some() && dep.clearance_ratio.is_some());
    assert!(base.time_ratio.is_none());
}

#[test]
fn failed_runs_are_recorded_and_the_suite_continues() {
    let good = Scenario::from_toml(CHAMBER).unwrap();
    let mut bad = good.clone();
    bad.name = "blocked".into();
    bad.static_solids.push(Aabb::new(
        Vec3::new(1.0, 0.8, 0.6),
        Vec3::new(1.4, 1.2, 1.0),
    ));
    let spec = SuiteSpec {
        kinds: vec![PlannerKind::Frontier],
        seeds: vec![1, 2],
        wall_budget: None,
    };
    let mut errors = 0;
    let out = run_suite(&[bad, good], &spec, |r| errors += r.is_err() as usize);
    assert_eq!(errors, 2);
    assert_eq!(out.failures.len(), 2);
    assert!(out.failures.iter().all(|f| f.scenario == "blocked"));
    assert_eq!(out.runs.len(), 2);

    let dir = tempfile::tempdir().unwrap();
    write_outputs(&out, dir.path()).unwrap();
    let mut rows = csv::Reader::from_path(dir.path().join("runs.csv")).unwrap();
    let header = rows.headers().unwrap().clone();
    let err_col = header.iter().position(|h| h == "error").unwrap();
    let records: Vec<csv::StringRecord> = rows.records().map(Result::unwrap).collect();
    assert_eq!(records.len(), 4);
    assert_eq!(records.iter().filter(|r| !r[err_col].is_empty()).count(), 2);
    assert!(header
        .iter()
        .any(|h| h == "computational_time_planner_phases"));
    for f in ["summary.csv", "rates.csv", "plans.jsonl"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}
