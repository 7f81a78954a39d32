//! End-to-end acceptance criteria. Each test prints one PASS/FAIL line with
//! its measured values; full runs are shared between criteria.

use std::io::Write;
use std::path::PathBuf;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dep_core::config::MapConfig;
use dep_core::esdf::EsdfGrid;
use dep_core::gain::evaluate_node;
use dep_core::harness::{run_with, PlannerKind, RunMetrics, RunOptions, Termination};
use dep_core::raycast::VoxelGrid;
use dep_core::{Config, OccupancyMap, Scenario, Vec3, VoxelState};

const STATIC: [&str; 3] = ["room", "maze", "corridor"];
const DYNAMIC: [&str; 3] = ["room_dynamic", "maze_dynamic", "corridor_dynamic"];

// criterion 1
const COMPLETENESS_SEEDS: u64 = 5;
const MIN_MAPPED: f64 = 0.95;
const MAX_WALL_SECS: f64 = 600.0;
// criterion 2
const MIN_OPT_ITERATIONS: usize = 20;
const TIME_RATIO: (f64, f64) = (0.70, 1.00);
const LENGTH_RATIO: (f64, f64) = (0.75, 1.00);
const CLEARANCE_RATIO: (f64, f64) = (1.00, 1.70);
// criterion 3
const SAFETY_SEEDS: u64 = 10;
// criterion 4
const MIN_REPLANS: usize = 20;
const REPLAN_SHARE: f64 = 0.5;
// criterion 5
const BASELINE_SEEDS: u64 = 10;
const MIN_BASELINE_WINS: usize = 7;
// criterion 6
const GAIN_MAPS: usize = 100;
// criterion 7
const ESDF_GRIDS: usize = 50;
const ORACLE_SIDE: usize = 20;
// criterion 9
const REEVAL_BAND: (f64, f64) = (0.05, 0.35);

fn report(criterion: u32, pass: bool, detail: String) {
    // straight to the handle so the line shows for passing tests too
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(
        std::io::stderr().lock(),
        "\ncriterion {criterion:>2}: {verdict}  {detail}"
    );
}

fn scenario(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(format!("{name}.toml"));
    Scenario::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn run(name: &str, kind: PlannerKind, seed: u64) -> RunMetrics {
    run_with(&scenario(name), &RunOptions::new(kind, seed))
        .unwrap()
        .metrics
}

struct Runs {
    /// DEP on the static scenarios, seeds 1..=5, maze up to 10.
    statics: Vec<RunMetrics>,
    /// DEP on the dynamic scenarios, seeds 1..=10.
    dynamics: Vec<RunMetrics>,
    /// Frontier baseline on the maze, seeds 1..=10.
    frontier: Vec<RunMetrics>,
}

fn runs() -> &'static Runs {
    static RUNS: OnceLock<Runs> = OnceLock::new();
    RUNS.get_or_init(|| {
        let mut statics = Vec::new();
        for name in STATIC {
            let seeds = if name == "maze" {
                BASELINE_SEEDS
            } else {
                COMPLETENESS_SEEDS
            };
            for seed in 1..=seeds {
                statics.push(run(name, PlannerKind::Dep, seed));
            }
        }
        let mut dynamics = Vec::new();
        for name in DYNAMIC {
            for seed in 1..=SAFETY_SEEDS {
                dynamics.push(run(name, PlannerKind::Dep, seed));
            }
        }
        let frontier = (1..=BASELINE_SEEDS)
            .map(|s| run("maze", PlannerKind::Frontier, s))
            .collect();
        Runs {
            statics,
            dynamics,
            frontier,
        }
    })
}

fn of<'a>(runs: &'a [RunMetrics], name: &'a str) -> impl Iterator<Item = &'a RunMetrics> {
    runs.iter().filter(move |r| r.scenario == name)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

#[test]
fn criterion_01_static_exploration_completes() {
    let r = runs();
    let mut pass = true;
    let mut detail = Vec::new();
    for name in STATIC {
        let group: Vec<&RunMetrics> = of(&r.statics, name)
            .filter(|m| m.seed <= COMPLETENESS_SEEDS)
            .collect();
        let ok = group
            .iter()
            .filter(|m| {
                m.outcome.termination == Termination::Converged
                    && m.outcome.mapped_fraction >= MIN_MAPPED
                    && m.timing.wall_time <= MAX_WALL_SECS
            })
            .count();
        let worst = group
            .iter()
            .map(|m| m.outcome.mapped_fraction)
            .fold(1.0, f64::min);
        let slowest = group.iter().map(|m| m.timing.wall_time).fold(0.0, f64::max);
        pass &= ok == group.len() && group.len() == COMPLETENESS_SEEDS as usize;
        detail.push(format!(
            "{name} {ok}/{} (min mapped {:.1}%, max wall {slowest:.1} s)",
            group.len(),
            100.0 * worst
        ));
    }
    report(1, pass, detail.join("; "));
    assert!(pass);
}

#[test]
fn criterion_02_optimizer_ratios() {
    let r = runs();
    let mut pass = true;
    let mut detail = Vec::new();
    for name in STATIC {
        let recs: Vec<_> = of(&r.statics, name)
            .filter(|m| m.seed <= COMPLETENESS_SEEDS)
            .flat_map(|m| m.outcome.optimizations.iter())
            .collect();
        let t = mean(&recs.iter().map(|o| o.t_opt / o.t0).collect::<Vec<_>>());
        let l = mean(&recs.iter().map(|o| o.l_opt / o.l0).collect::<Vec<_>>());
        let d = mean(&recs.iter().map(|o| o.d_opt / o.d0).collect::<Vec<_>>());
        let ok = recs.len() >= MIN_OPT_ITERATIONS
            && (TIME_RATIO.0..TIME_RATIO.1).contains(&t)
            && (LENGTH_RATIO.0..LENGTH_RATIO.1).contains(&l)
            && d > CLEARANCE_RATIO.0
            && d <= CLEARANCE_RATIO.1;
        pass &= ok;
        detail.push(format!(
            "{name} n={} t {:.1}% L {:.1}% D {:.1}%",
            recs.len(),
            100.0 * t,
            100.0 * l,
            100.0 * d
        ));
    }
    report(2, pass, detail.join("; "));
    assert!(pass);
}

#[test]
fn criterion_03_dynamic_runs_are_collision_free() {
    let r = runs();
    let mut pass = true;
    let mut detail = Vec::new();
    for name in DYNAMIC {
        let group: Vec<&RunMetrics> = of(&r.dynamics, name).collect();
        let clean = group.iter().filter(|m| m.is_safe()).count();
        let hit: Vec<u64> = group
            .iter()
            .filter(|m| !m.is_safe())
            .map(|m| m.seed)
            .collect();
        pass &= clean == SAFETY_SEEDS as usize;
        detail.push(format!(
            "{name} {clean}/{}{}",
            group.len(),
            if hit.is_empty() {
                String::new()
            } else {
                format!(" (contact on seeds {hit:?})")
            }
        ));
    }
    report(3, pass, detail.join("; "));
    assert!(pass);
}

#[test]
fn criterion_04_replanning_is_fast() {
    let r = runs();
    let replans: Vec<f64> = r
        .dynamics
        .iter()
        .flat_map(|m| m.timing.replanning_times.iter().copied())
        .collect();
    let plans: Vec<f64> = r
        .dynamics
        .iter()
        .flat_map(|m| m.timing.plan_iteration_times.iter().copied())
        .collect();
    let (mr, mp) = (median(&replans), median(&plans));
    let pass = replans.len() >= MIN_REPLANS && mr < REPLAN_SHARE * mp;
    report(
        4,
        pass,
        format!(
            "{} replans, median {:.3} ms vs plan iteration median {:.3} ms ({:.1}%)",
            replans.len(),
            1e3 * mr,
            1e3 * mp,
            100.0 * mr / mp
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_05_dep_beats_frontier_on_the_maze() {
    let r = runs();
    let mut wins = 0;
    let mut pairs = Vec::new();
    for seed in 1..=BASELINE_SEEDS {
        let dep = of(&r.statics, "maze").find(|m| m.seed == seed).unwrap();
        let base = r.frontier.iter().find(|m| m.seed == seed).unwrap();
        if dep.outcome.exploration_time <= base.outcome.exploration_time {
            wins += 1;
        }
        pairs.push(format!(
            "{:.0}/{:.0}",
            dep.outcome.exploration_time, base.outcome.exploration_time
        ));
    }
    let pass = wins >= MIN_BASELINE_WINS;
    report(
        5,
        pass,
        format!(
            "{wins}/{BASELINE_SEEDS} seeds (dep/frontier s: {})",
            pairs.join(" ")
        ),
    );
    assert!(pass);
}

/// Random voxel states on a cube of `side` voxels with the given shares of
/// free and occupied voxels; the rest stay unknown.
fn random_map(rng: &mut ChaCha8Rng, side: usize, free: f64, occupied: f64) -> OccupancyMap {
    let grid = VoxelGrid {
        origin: Vec3::zeros(),
        resolution: 0.2,
        dims: [side; 3],
    };
    let mut m = OccupancyMap::with_grid(grid, grid.extent(), &MapConfig::default());
    for i in 0..m.len() {
        let u: f64 = rng.gen();
        let s = if u < free {
            VoxelState::Free
        } else if u < free + occupied {
            VoxelState::Occupied
        } else {
            VoxelState::Unknown
        };
        m.set_state(i, s);
    }
    m
}

/// Whether the segment `a → b` crosses the open box `[lo, hi]` (slab test).
fn crosses_box(a: &Vec3, b: &Vec3, lo: &Vec3, hi: &Vec3) -> bool {
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for i in 0..3 {
        let d = b[i] - a[i];
        if d == 0.0 {
            if a[i] <= lo[i] || a[i] >= hi[i] {
                return false;
            }
            continue;
        }
        let (mut u, mut v) = ((lo[i] - a[i]) / d, (hi[i] - a[i]) / d);
        if u > v {
            std::mem::swap(&mut u, &mut v);
        }
        t0 = t0.max(u);
        t1 = t1.min(v);
        if t0 >= t1 {
            return false;
        }
    }
    true
}

/// Weighted count of unknown voxels within planner range and vertical field
/// of view whose sight line from `p` crosses no occupied voxel.
fn visible_gain(map: &OccupancyMap, p: &Vec3, cfg: &Config) -> (f64, [u64; 3]) {
    let g = *map.grid();
    let res = g.resolution;
    let n = g.dims;
    let at = |x: i64, y: i64, z: i64| -> Option<VoxelState> {
        let inside = (0..3).all(|a| [x, y, z][a] >= 0 && [x, y, z][a] < n[a] as i64);
        inside.then(|| map.state(x as usize + n[0] * (y as usize + n[1] * z as usize)))
    };
    let mut boxes = Vec::new();
    for i in 0..map.len() {
        if map.state(i) == VoxelState::Occupied {
            let lo = g.origin + Vec3::from(g.coords(i).map(|c| c as f64)) * res;
            boxes.push((lo, lo + Vec3::repeat(res)));
        }
    }
    let half_v = 0.5 * cfg.sensor.fov_deg[1].to_radians();
    let mut total = 0.0;
    let mut counts = [0u64; 3];
    for i in 0..map.len() {
        if map.state(i) != VoxelState::Unknown {
            continue;
        }
        let c = g.coords(i);
        let center = g.origin + Vec3::from(c.map(|v| v as f64 + 0.5)) * res;
        let d = center - p;
        if d.norm() > cfg.sensor.planner_range || d.z.atan2(d.x.hypot(d.y)).abs() > half_v {
            continue;
        }
        if boxes.iter().any(|(lo, hi)| crosses_box(p, &center, lo, hi)) {
            continue;
        }
        let (x, y, z) = (c[0] as i64, c[1] as i64, c[2] as i64);
        let around = [
            (1, 0, 0),
            (-1, 0, 0),
            (0, 1, 0),
            (0, -1, 0),
            (0, 0, 1),
            (0, 0, -1),
        ]
        .map(|(dx, dy, dz)| at(x + dx, y + dy, z + dz));
        let free = around.contains(&Some(VoxelState::Free));
        let occ = around.contains(&Some(VoxelState::Occupied));
        let class = match (free, occ) {
            (true, true) => 2,
            (true, false) => 1,
            _ => 0,
        };
        counts[class] += 1;
        total += cfg.gain.weights[class];
    }
    (total, counts)
}

#[test]
fn criterion_06_gain_matches_visibility_oracle() {
    let cfg = Config::default();
    let gc = cfg.gain_config();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mismatches = 0;
    let mut visible = 0u64;
    for _ in 0..GAIN_MAPS {
        let free = rng.gen_range(0.4..0.8);
        let occupied = rng.gen_range(0.01..0.15);
        let mut m = random_map(&mut rng, ORACLE_SIDE, free, occupied);
        let cell = [0, 1, 2].map(|_| rng.gen_range(2..ORACLE_SIDE - 2));
        let g = *m.grid();
        m.set_state(g.index(cell), VoxelState::Free);
        let jitter = Vec3::from([0, 1, 2].map(|_| rng.gen_range(-0.09..0.09)));
        let p = g.center(cell) + jitter;
        let got = evaluate_node(&m, &p, &gc).unwrap();
        let want = visible_gain(&m, &p, &cfg);
        visible += want.1.iter().sum::<u64>();
        if (got.total_gain, got.class_counts) != want {
            mismatches += 1;
        }
    }
    let pass = mismatches == 0;
    report(
        6,
        pass,
        format!("{mismatches}/{GAIN_MAPS} maps differ ({visible} visible unknown voxels checked)"),
    );
    assert!(pass);
}

/// Squared center distance in voxels to the nearest non-free voxel, with the
/// space outside the grid counted as obstacle.
fn brute_edt(map: &OccupancyMap) -> Vec<u32> {
    let g = map.grid();
    let n = g.dims.map(|d| d as i64);
    let obstacles: Vec<[i64; 3]> = (0..map.len())
        .filter(|&i| map.state(i) != VoxelState::Free)
        .map(|i| g.coords(i).map(|c| c as i64))
        .collect();
    (0..map.len())
        .map(|i| {
            let c = g.coords(i).map(|v| v as i64);
            let mut best = i64::MAX;
            for a in 0..3 {
                let out = (c[a] + 1).min(n[a] - c[a]);
                best = best.min(out * out);
            }
            for o in &obstacles {
                best = best.min((0..3).map(|a| (o[a] - c[a]).pow(2)).sum());
            }
            best as u32
        })
        .collect()
}

#[test]
fn criterion_07_esdf_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut mismatches = 0;
    for _ in 0..ESDF_GRIDS {
        let free = rng.gen_range(0.85..0.999);
        let occupied = rng.gen_range(0.0..1.0 - free);
        let m = random_map(&mut rng, ORACLE_SIDE, free, occupied);
        let e = EsdfGrid::rebuild(&m);
        let want = brute_edt(&m);
        let res = m.resolution();
        let exact = (0..m.len())
            .all(|i| e.squared_cells(i) == want[i] && e.at(i) == res * f64::from(want[i]).sqrt());
        if !exact {
            mismatches += 1;
        }
    }
    let pass = mismatches == 0;
    report(7, pass, format!("{mismatches}/{ESDF_GRIDS} grids differ"));
    assert!(pass);
}

#[test]
fn criterion_08_roadmap_audit_is_clean() {
    let r = runs();
    let all: Vec<&RunMetrics> = r.statics.iter().chain(&r.dynamics).collect();
    let violations: Vec<&String> = all
        .iter()
        .flat_map(|m| &m.outcome.roadmap_violations)
        .collect();
    let audited: usize = all.iter().map(|m| m.outcome.iterations).sum();
    let pass = violations.is_empty();
    report(
        8,
        pass,
        format!(
            "{} violations over {} runs, {audited} iterations{}",
            violations.len(),
            all.len(),
            violations
                .first()
                .map(|v| format!(", first: {v}"))
                .unwrap_or_default()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_09_update_rule_reevaluates_few_nodes() {
    let r = runs();
    let fractions: Vec<f64> = of(&r.statics, "maze")
        .flat_map(|m| &m.outcome.updates)
        .filter(|u| u.near > 0)
        .map(|u| u.reevaluated as f64 / u.near as f64)
        .collect();
    let f = mean(&fractions);
    let pass = !fractions.is_empty() && f >= REEVAL_BAND.0 && f <= REEVAL_BAND.1;
    report(
        9,
        pass,
        format!(
            "mean re-evaluated share {:.1}% over {} updates",
            100.0 * f,
            fractions.len()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_10_runs_are_deterministic() {
    let r = runs();
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, first) in [
        ("maze", of(&r.statics, "maze").next().unwrap()),
        (
            "corridor_dynamic",
            of(&r.dynamics, "corridor_dynamic").next().unwrap(),
        ),
    ] {
        let again = run(name, first.kind, first.seed);
        let same = again.outcome == first.outcome
            && serde_json::to_string(&again.outcome).unwrap()
                == serde_json::to_string(&first.outcome).unwrap();
        pass &= same;
        detail.push(format!(
            "{name} seed {}: {}",
            first.seed,
            if same { "identical" } else { "differs" }
        ));
    }
    report(10, pass, detail.join("; "));
    assert!(pass);
}
