//! Full exploration runs in the simulator.
//!
//! A run spins in place once, then alternates planning and execution until
//! the planner reports convergence or a budget runs out. Everything that
//! depends only on the scenario, planner kind and seed lives in [`Outcome`]
//! and is reproducible bit for bit; wall-clock measurements live in
//! [`Timing`].

pub mod frontier;
pub mod suite;
pub mod tracker;

use std::collections::VecDeque;
use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::esdf::EsdfGrid;
use crate::gain::{evaluate_pending, update_after_execution, UpdateStats};
use crate::geometry::{angle_diff, azimuth, wrap_angle, Vec3};
use crate::grid_world::{PathFollower, Pose, Ray, Scenario};
use crate::occupancy::{OccupancyMap, VoxelState};
use crate::optimizer::{optimize, PathLimits};
use crate::planner::{
    check_termination, edges_near, motion_yaws, nearby_moves, plan, predict_collision, replan,
    Conflict, ObstacleEstimate, PlanSettings, Trajectory,
};
use crate::roadmap::{NodeId, Roadmap};
use frontier::FrontierPlanner;
use tracker::Tracker;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    Dep,
    /// The roadmap planner with the waypoint optimizer switched off.
    DepNoOpt,
    Frontier,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 3] = [
        PlannerKind::Dep,
        PlannerKind::DepNoOpt,
        PlannerKind::Frontier,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlannerKind::Dep => "dep",
            PlannerKind::DepNoOpt => "dep_no_opt",
            PlannerKind::Frontier => "frontier",
        }
    }
}

impl fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlannerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "dep" => Ok(PlannerKind::Dep),
            "dep_no_opt" => Ok(PlannerKind::DepNoOpt),
            "frontier" => Ok(PlannerKind::Frontier),
            other => Err(Error::InvalidConfig(format!(
                "unknown planner kind '{other}'"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// The sampler added no node for the configured number of iterations.
    Converged,
    /// The frontier baseline ran out of targets.
    NoFrontiers,
    WallBudget,
    SimTimeLimit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    pub kind: PlannerKind,
    pub seed: u64,
    /// Overrides `sim.budget_secs`.
    pub wall_budget: Option<f64>,
    /// Overrides `sim.max_sim_time`.
    pub max_sim_time: Option<f64>,
}

impl RunOptions {
    pub fn new(kind: PlannerKind, seed: u64) -> Self {
        Self {
            kind,
            seed,
            wall_budget: None,
            max_sim_time: None,
        }
    }
}

/// Waypoint optimizer effect on one planned trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptRecord {
    pub t0: f64,
    pub t_opt: f64,
    pub l0: f64,
    pub l_opt: f64,
    pub d0: f64,
    pub d_opt: f64,
    pub passes: usize,
    pub infeasible_input: bool,
}

/// Deterministic summary of one planning iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub iteration: usize,
    pub sim_time: f64,
    pub new_nodes: usize,
    pub nodes: usize,
    pub edges: usize,
    pub candidates: usize,
    pub goal: Option<NodeId>,
    pub score: Option<f64>,
    pub exec_time: Option<f64>,
    pub invalid_edges: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub termination: Termination,
    /// Simulated seconds until termination.
    pub exploration_time: f64,
    pub path_length: f64,
    /// Observed share of the voxels reachable from the start.
    pub mapped_fraction: f64,
    pub reachable_voxels: usize,
    pub iterations: usize,
    pub replanning_events: usize,
    /// Ground-truth collision episodes (entries into contact).
    pub collisions: usize,
    /// Mean obstacle distance along the flown path, in the final map.
    pub mean_clearance: Option<f64>,
    /// (simulated time, mapped fraction) samples.
    pub rate_curve: Vec<(f64, f64)>,
    pub optimizations: Vec<OptRecord>,
    pub updates: Vec<UpdateStats>,
    pub plans: Vec<PlanRecord>,
    pub nodes: usize,
    pub edges: usize,
    /// Roadmap invariant breaches found by the per-iteration audit.
    pub roadmap_violations: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    /// Seconds spent in planner phases.
    pub computational_time: f64,
    pub plan_iteration_times: Vec<f64>,
    pub replanning_times: Vec<f64>,
    pub sampling_time: f64,
    pub gain_time: f64,
    pub search_time: f64,
    pub optimize_time: f64,
    pub wall_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub scenario: String,
    pub kind: PlannerKind,
    pub seed: u64,
    pub outcome: Outcome,
    pub timing: Timing,
}

impl RunMetrics {
    pub fn is_safe(&self) -> bool {
        self.outcome.collisions == 0
    }
}

/// Run metrics plus the final world model.
pub struct RunArtifacts {
    pub metrics: RunMetrics,
    pub map: OccupancyMap,
    /// Empty for the frontier baseline.
    pub roadmap: Roadmap,
    /// Robot position after every tick.
    pub trace: Vec<Vec3>,
}

/// Interior voxels connected to the start through voxels whose centers lie
/// outside every static solid.
pub fn reachable_voxels(scenario: &Scenario, map: &OccupancyMap) -> Vec<usize> {
    let g = map.grid();
    let open = |i: usize| map.is_interior(i) && !scenario.is_solid_point(&g.center_of(i));
    let Some(start) = g
        .voxel_of(&scenario.robot_start.position)
        .filter(|&i| open(i))
    else {
        return Vec::new();
    };
    let mut seen = vec![false; map.len()];
    seen[start] = true;
    let mut stack = vec![start];
    let mut out = Vec::new();
    while let Some(u) = stack.pop() {
        out.push(u);
        for nb in g.neighbors6(g.coords(u)) {
            let v = g.index(nb);
            if !seen[v] && open(v) {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    out.sort_unstable();
    out
}

pub fn mapped_fraction(map: &OccupancyMap, reachable: &[usize]) -> f64 {
    if reachable.is_empty() {
        return 0.0;
    }
    let known = reachable
        .iter()
        .filter(|&&i| map.state(i) != VoxelState::Unknown)
        .count();
    known as f64 / reachable.len() as f64
}

struct Sim<'a> {
    scenario: &'a Scenario,
    cfg: &'a Config,
    map: OccupancyMap,
    pose: Pose,
    ticks: u64,
    tracker: Tracker,
    /// (time, pose) of scans within the track memory.
    views: VecDeque<(f64, Pose)>,
    reachable: Vec<usize>,
    in_collision: bool,
    collisions: usize,
    path_length: f64,
    trace: Vec<Vec3>,
    rate_curve: Vec<(f64, f64)>,
    rate_every: u64,
    started: Instant,
    wall_budget: f64,
    max_sim_time: f64,
}

impl<'a> Sim<'a> {
    fn new(scenario: &'a Scenario, opts: &RunOptions) -> Self {
        let cfg = &scenario.config;
        let map = OccupancyMap::new(&scenario.bounds, &cfg.map);
        let reachable = reachable_voxels(scenario, &map);
        Self {
            scenario,
            cfg,
            map,
            pose: scenario.robot_start,
            ticks: 0,
            tracker: Tracker::new(
                cfg.planner.velocity_window,
                cfg.planner.track_memory,
                cfg.planner.min_obstacle_radius,
                cfg.planner.min_obstacle_speed,
            ),
            views: VecDeque::new(),
            reachable,
            in_collision: false,
            collisions: 0,
            path_length: 0.0,
            trace: vec![scenario.robot_start.position],
            rate_curve: Vec::new(),
            rate_every: ((cfg.sim.rate_sample_period / cfg.sim.dt).round() as u64).max(1),
            started: Instant::now(),
            wall_budget: opts.wall_budget.unwrap_or(cfg.sim.budget_secs),
            max_sim_time: opts.max_sim_time.unwrap_or(cfg.sim.max_sim_time),
        }
    }

    fn time(&self) -> f64 {
        self.ticks as f64 * self.cfg.sim.dt
    }

    fn sense(&mut self) -> Result<()> {
        let t = self.time();
        let labeled = self.scenario.simulate_scan_labeled(&self.pose, t)?;
        let rays: Vec<Ray> = labeled.iter().map(|l| l.ray).collect();
        self.map
            .integrate_scan(&self.pose.position, &rays, self.cfg.sensor.max_range);
        self.tracker.observe(&self.pose.position, &labeled, t);
        self.views.push_back((t, self.pose));
        while self
            .views
            .front()
            .is_some_and(|v| t - v.0 > self.cfg.planner.track_memory + 1e-9)
        {
            self.views.pop_front();
        }
        Ok(())
    }

    /// Whether `p` lay in the horizontal field of view of a recent scan.
    /// Anything moving there since is still tracked.
    fn recently_seen(&self, p: &Vec3) -> bool {
        let half_fov = 0.5 * self.cfg.sensor.fov_deg[0].to_radians();
        self.views.iter().any(|(_, pose)| {
            let d = p - pose.position;
            d.xy().norm() <= self.cfg.sensor.max_range
                && azimuth(&d).is_some_and(|a| angle_diff(a, pose.yaw).abs() <= half_fov)
        })
    }

    /// Advances one tick, moving along `follower` or holding still.
    fn tick(&mut self, follower: Option<&mut PathFollower>) -> Result<()> {
        if let Some(f) = follower {
            let next = f.step(
                &self.pose,
                self.cfg.sim.dt,
                self.cfg.robot.v_max,
                self.cfg.robot.omega_max,
            );
            self.path_length += (next.position - self.pose.position).norm();
            self.pose = next;
        }
        self.ticks += 1;
        self.trace.push(self.pose.position);
        self.sense()?;
        let hit = self
            .scenario
            .check_ground_truth_collision(&self.pose, self.time());
        if hit && !self.in_collision {
            self.collisions += 1;
            log::debug!(
                "contact at t={:.1}: robot {:?} yaw {:.2}, walkers {:?}, tracked {:?}",
                self.time(),
                self.pose.position.as_slice(),
                self.pose.yaw,
                self.scenario
                    .dynamic_obstacles
                    .iter()
                    .map(|o| o.position_at(self.time()))
                    .collect::<Vec<_>>(),
                self.tracker.estimates(self.time())
            );
        }
        self.in_collision = hit;
        if self.ticks.is_multiple_of(self.rate_every) {
            self.rate_curve
                .push((self.time(), mapped_fraction(&self.map, &self.reachable)));
        }
        Ok(())
    }

    fn limit(&self) -> Option<Termination> {
        if self.time() >= self.max_sim_time - 1e-9 {
            Some(Termination::SimTimeLimit)
        } else if self.started.elapsed().as_secs_f64() >= self.wall_budget {
            Some(Termination::WallBudget)
        } else {
            None
        }
    }

    /// Full turn in place in four quarter turns.
    fn spin(&mut self) -> Result<()> {
        let p = self.pose.position;
        let yaws: Vec<f64> = (1..=4)
            .map(|k| wrap_angle(self.pose.yaw + k as f64 * FRAC_PI_2))
            .collect();
        let mut f = PathFollower::new(vec![p; 4], yaws)?;
        while !f.is_done() && self.limit().is_none() {
            self.tick(Some(&mut f))?;
        }
        Ok(())
    }
}

/// Accumulates everything a run reports.
struct Recorder {
    outcome: Outcome,
    timing: Timing,
}

impl Recorder {
    fn new() -> Self {
        Self {
            outcome: Outcome {
                termination: Termination::SimTimeLimit,
                exploration_time: 0.0,
                path_length: 0.0,
                mapped_fraction: 0.0,
                reachable_voxels: 0,
                iterations: 0,
                replanning_events: 0,
                collisions: 0,
                mean_clearance: None,
                rate_curve: Vec::new(),
                optimizations: Vec::new(),
                updates: Vec::new(),
                plans: Vec::new(),
                nodes: 0,
                edges: 0,
                roadmap_violations: Vec::new(),
            },
            timing: Timing::default(),
        }
    }
}

pub fn run_exploration(scenario: &Scenario, kind: PlannerKind, seed: u64) -> Result<RunMetrics> {
    Ok(run_with(scenario, &RunOptions::new(kind, seed))?.metrics)
}

pub fn run_with(scenario: &Scenario, opts: &RunOptions) -> Result<RunArtifacts> {
    scenario.validate()?;
    let mut sim = Sim::new(scenario, opts);
    let mut rec = Recorder::new();
    let mut roadmap = Roadmap::new(
        scenario.config.sampler.d_th_max,
        scenario.config.gain.sectors,
    );
    sim.sense()?;
    sim.spin()?;
    match opts.kind {
        PlannerKind::Dep | PlannerKind::DepNoOpt => {
            run_roadmap_planner(&mut sim, &mut rec, &mut roadmap, opts)?
        }
        PlannerKind::Frontier => run_frontier(&mut sim, &mut rec)?,
    }

    let mut o = rec.outcome;
    o.exploration_time = sim.time();
    o.path_length = sim.path_length;
    o.mapped_fraction = mapped_fraction(&sim.map, &sim.reachable);
    o.reachable_voxels = sim.reachable.len();
    o.collisions = sim.collisions;
    o.rate_curve = std::mem::take(&mut sim.rate_curve);
    o.nodes = roadmap.len();
    o.edges = roadmap.edge_count();
    let mut flown = sim.trace.clone();
    flown.dedup();
    if flown.len() >= 2 {
        o.mean_clearance = EsdfGrid::rebuild(&sim.map)
            .average_trajectory_distance(&flown)
            .ok();
    }
    let mut timing = rec.timing;
    timing.wall_time = sim.started.elapsed().as_secs_f64();
    Ok(RunArtifacts {
        metrics: RunMetrics {
            scenario: scenario.name.clone(),
            kind: opts.kind,
            seed: opts.seed,
            outcome: o,
            timing,
        },
        map: sim.map,
        roadmap,
        trace: sim.trace,
    })
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

fn run_roadmap_planner(
    sim: &mut Sim,
    rec: &mut Recorder,
    roadmap: &mut Roadmap,
    opts: &RunOptions,
) -> Result<()> {
    let cfg = sim.cfg;
    let settings = PlanSettings::from_config(cfg);
    let limits = PathLimits::from_config(cfg);
    let gain_cfg = cfg.gain_config();
    let half = cfg.robot.half_extents();
    let local = cfg.local_box_extents();
    let mut sample_rng = ChaCha8Rng::seed_from_u64(opts.seed);
    sample_rng.set_stream(1);
    let mut opt_rng = ChaCha8Rng::seed_from_u64(opts.seed);
    opt_rng.set_stream(2);
    let mut new_counts = Vec::new();
    let mut carried = 0;
    let mut stalled = 0;
    let max_stall = (cfg.planner.max_hold / cfg.sim.dt).round() as usize;

    loop {
        if let Some(t) = sim.limit() {
            rec.outcome.termination = t;
            return Ok(());
        }
        rec.outcome.iterations += 1;

        let t_sample = Instant::now();
        let report = roadmap.sample_incremental(
            &sim.map,
            &sim.pose.position,
            &cfg.sampler,
            &local,
            &half,
            &mut sample_rng,
        );
        // older nodes near the robot retry their missing links, since space
        // that was unknown when they were inserted may be mapped by now
        let mut linking = roadmap.within_radius(&sim.pose.position, cfg.sensor.planner_range);
        linking.extend(&report.new_ids);
        linking.sort_unstable();
        linking.dedup();
        let added = roadmap.connect(
            &sim.map,
            &linking,
            cfg.sensor.planner_range,
            cfg.sampler.d_th_max,
            &half,
        )?;
        let sampling = secs(t_sample);
        audit(
            roadmap,
            &sim.map,
            &report.new_ids,
            &added,
            cfg,
            &mut rec.outcome.roadmap_violations,
        );

        let t_gain = Instant::now();
        evaluate_pending(roadmap, &sim.map, &gain_cfg);
        let gain = secs(t_gain);

        // an iteration given up behind a moving obstacle is not an
        // exploration step; its nodes count toward the next one
        let count = report.new_ids.len() + carried;
        carried = 0;
        new_counts.push(count);
        let mut record = PlanRecord {
            iteration: rec.outcome.iterations,
            sim_time: sim.time(),
            new_nodes: report.new_ids.len(),
            nodes: roadmap.len(),
            edges: roadmap.edge_count(),
            candidates: 0,
            goal: None,
            score: None,
            exec_time: None,
            invalid_edges: 0,
        };
        if check_termination(&new_counts, cfg.planner.termination_n) {
            charge(&mut rec.timing, sampling, gain, 0.0, 0.0);
            rec.outcome.plans.push(record);
            rec.outcome.termination = Termination::Converged;
            return Ok(());
        }

        let t_search = Instant::now();
        let mut trajectory = if roadmap.is_empty() {
            None
        } else {
            let plan_report = plan(
                roadmap,
                &sim.map,
                &sim.pose,
                cfg.planner.lambda_regular,
                &settings,
            )?;
            record.candidates = plan_report.candidates;
            record.invalid_edges = plan_report.invalid_edges;
            plan_report.trajectory
        };
        let search = secs(t_search);

        let t_opt = Instant::now();
        if opts.kind == PlannerKind::Dep {
            if let Some(traj) = trajectory.as_mut() {
                let esdf = EsdfGrid::rebuild(&sim.map);
                let out = optimize(traj, &sim.map, &esdf, &limits, &cfg.optimizer, &mut opt_rng)?;
                rec.outcome.optimizations.push(OptRecord {
                    t0: out.t0,
                    t_opt: out.t_opt,
                    l0: traj.length(),
                    l_opt: out.trajectory.length(),
                    d0: out.d0,
                    d_opt: out.d_opt,
                    passes: out.iterations,
                    infeasible_input: out.infeasible_input,
                });
                *traj = out.trajectory;
            }
        }
        let optimizing = if opts.kind == PlannerKind::Dep {
            secs(t_opt)
        } else {
            0.0
        };
        charge(&mut rec.timing, sampling, gain, search, optimizing);

        record.goal = trajectory.as_ref().and_then(|t| t.goal());
        record.score = trajectory.as_ref().map(|t| t.score);
        record.exec_time = trajectory.as_ref().map(|t| t.exec_time);
        rec.outcome.plans.push(record);

        let planned = trajectory.is_some();
        let executed = match trajectory {
            Some(traj) => {
                let (executed, abandoned) = execute(sim, rec, roadmap, &traj, &settings)?;
                if abandoned {
                    carried = new_counts.pop().unwrap_or(0);
                }
                executed
            }
            None => {
                // a tracked obstacle standing on the roadmap can block every
                // path for a while; wait for it like a blocked trajectory
                sim.tick(None)?;
                if !sim.tracker.is_empty() && stalled < max_stall {
                    stalled += 1;
                    carried = new_counts.pop().unwrap_or(0);
                }
                vec![sim.pose.position]
            }
        };
        if planned {
            stalled = 0;
        }
        let stats = update_after_execution(
            roadmap,
            &sim.map,
            &executed,
            &gain_cfg,
            &cfg.update,
            cfg.update_radius(),
            cfg.zero_distance_threshold(),
        );
        rec.outcome.updates.push(stats);
    }
}

fn charge(timing: &mut Timing, sampling: f64, gain: f64, search: f64, optimizing: f64) {
    let total = sampling + gain + search + optimizing;
    timing.sampling_time += sampling;
    timing.gain_time += gain;
    timing.search_time += search;
    timing.optimize_time += optimizing;
    timing.plan_iteration_times.push(total);
    timing.computational_time += total;
}

/// Checks the nodes and edges added this iteration against the map they
/// were inserted on.
fn audit(
    roadmap: &Roadmap,
    map: &OccupancyMap,
    new_ids: &[NodeId],
    new_edges: &[(NodeId, NodeId)],
    cfg: &Config,
    out: &mut Vec<String>,
) {
    let half = cfg.robot.half_extents();
    let d_min = cfg.sampler.d_th_min;
    let nodes = roadmap.nodes();
    for &id in new_ids {
        let node = &nodes[id];
        if !map.is_box_free(&node.position, &half) {
            out.push(format!("node {id} collides with the map"));
        }
        for other in roadmap.within_radius(&node.position, d_min) {
            let d = (nodes[other].position - node.position).norm();
            if other != id && d < d_min {
                out.push(format!("nodes {id} and {other} are {d:.3} m apart"));
            }
        }
    }
    for &(a, b) in new_edges {
        let (p, q) = (nodes[a].position, nodes[b].position);
        let len = (p - q).norm();
        if !roadmap.has_edge(b, a) {
            out.push(format!("edge {a}-{b} is one-sided"));
        }
        if len > cfg.sampler.d_th_max || len > cfg.sensor.planner_range {
            out.push(format!("edge {a}-{b} is {len:.3} m long"));
        }
        if !map.is_segment_traversable(&p, &q, &half) {
            out.push(format!("edge {a}-{b} is not traversable"));
        }
    }
}

/// Follows `traj`, replanning when a tracked obstacle is predicted to hit
/// the robot. Without a safe alternative the robot holds and resumes once
/// the way is clear, or steps aside when holding is unsafe too. Returns the
/// positions visited and whether the trajectory was given up.
fn execute(
    sim: &mut Sim,
    rec: &mut Recorder,
    roadmap: &Roadmap,
    traj: &Trajectory,
    settings: &PlanSettings,
) -> Result<(Vec<Vec3>, bool)> {
    let cfg = sim.cfg;
    let dt = cfg.sim.dt;
    let max_hold = (cfg.planner.max_hold / dt).round() as usize;
    let mut executed = vec![sim.pose.position];
    let mut follower = traj.follower()?;
    let mut held = 0;
    while sim.limit().is_none() {
        let obstacles = sim.tracker.estimates(sim.time());
        if let Some(conflict) = predict(sim, Some(&follower), &obstacles) {
            rec.outcome.replanning_events += 1;
            let t = Instant::now();
            let next = avoid(sim, roadmap, settings, &obstacles, conflict)?;
            let spent = secs(t);
            rec.timing.replanning_times.push(spent);
            rec.timing.computational_time += spent;
            match next {
                Some(f) => {
                    follower = f;
                    held = 0;
                }
                None => {
                    sim.tick(None)?;
                    executed.push(sim.pose.position);
                    held += 1;
                    if held >= max_hold {
                        return Ok((executed, true));
                    }
                    continue;
                }
            }
        }
        sim.tick(Some(&mut follower))?;
        executed.push(sim.pose.position);
        if follower.is_done() {
            break;
        }
    }
    Ok((executed, false))
}

fn predict(
    sim: &Sim,
    follower: Option<&PathFollower>,
    obstacles: &[ObstacleEstimate],
) -> Option<Conflict> {
    predict_with(sim, follower, obstacles, sim.cfg.planner.safety_margin)
}

fn predict_with(
    sim: &Sim,
    follower: Option<&PathFollower>,
    obstacles: &[ObstacleEstimate],
    margin: f64,
) -> Option<Conflict> {
    let cfg = sim.cfg;
    predict_collision(
        follower,
        &sim.pose,
        obstacles,
        cfg.planner.horizon,
        cfg.sim.dt,
        cfg.robot.v_max,
        cfg.robot.omega_max,
        &cfg.robot.half_extents(),
        margin,
    )
}

/// A conflict-free replacement for the current trajectory: a replan around
/// the conflict region first, then, if even holding still is unsafe, the
/// quickest move to a nearby node or a short hop aside. `None` means hold.
fn avoid(
    sim: &Sim,
    roadmap: &Roadmap,
    settings: &PlanSettings,
    obstacles: &[ObstacleEstimate],
    conflict: Conflict,
) -> Result<Option<PathFollower>> {
    let cfg = sim.cfg;
    let half = cfg.robot.half_extents();
    let est = obstacles[conflict.obstacle];
    let clearance = 2.0 * (est.radius + cfg.planner.safety_margin) + half.x.max(half.y);
    let mut points = vec![conflict.obstacle_position, est.position];
    for _ in 0..cfg.planner.replan_attempts.max(1) {
        let report = replan(
            roadmap,
            &sim.map,
            &sim.pose,
            cfg.planner.lambda_replan,
            settings,
            &points,
            clearance,
        )?;
        let Some(candidate) = report.trajectory else {
            break;
        };
        let f = candidate.follower()?;
        match predict(sim, Some(&f), obstacles) {
            None => return Ok(Some(f)),
            Some(again) => points.push(again.obstacle_position),
        }
    }
    if predict(sim, None, obstacles).is_none() {
        return Ok(None);
    }
    // holding is unsafe too: take a conflict-free nearby move, or else the
    // one that delays contact longest, judged first without the margin;
    // moves through recently seen space win ties
    let blocked = edges_near(roadmap, &points, clearance);
    let mut moves = Vec::new();
    for t in nearby_moves(
        roadmap,
        &sim.map,
        &sim.pose,
        cfg.sensor.planner_range,
        settings,
        &blocked,
        &[],
        0.0,
    )? {
        moves.push((t.follower()?, true));
    }
    moves.extend(dodges(sim)?);
    let delay = |f: Option<&PathFollower>| {
        let at = |margin| predict_with(sim, f, obstacles, margin).map_or(f64::INFINITY, |c| c.time);
        (at(0.0), at(cfg.planner.safety_margin))
    };
    let mut best = ((delay(None), true), None);
    for (f, seen) in moves {
        let d = delay(Some(&f));
        if seen && d.1 == f64::INFINITY {
            return Ok(Some(f));
        }
        if (d, seen) > best.0 {
            best = ((d, seen), Some(f));
        }
    }
    Ok(best.1)
}

/// Straight hops through known free space that keep the heading, so the
/// robot can back away while facing what it avoids. Each hop is flagged
/// with whether it only crosses space seen within the track memory.
fn dodges(sim: &Sim) -> Result<Vec<(PathFollower, bool)>> {
    let half = sim.cfg.robot.half_extents();
    let from = sim.pose.position;
    let reach = half.x.max(half.y) + sim.cfg.planner.min_obstacle_radius;
    let mut out = Vec::new();
    for dist in [0.4, 0.8, 1.2] {
        for k in 0..DODGE_DIRECTIONS {
            let a = std::f64::consts::TAU * k as f64 / DODGE_DIRECTIONS as f64;
            let to = from + Vec3::new(a.cos(), a.sin(), 0.0) * dist;
            if sim.map.is_segment_traversable(&from, &to, &half) {
                let seen = swept_seen(sim, &from, &to, reach);
                out.push((
                    PathFollower::new(vec![from, to], vec![sim.pose.yaw; 2])?,
                    seen,
                ));
            }
        }
    }
    Ok(out)
}

const DODGE_DIRECTIONS: usize = 16;

/// Whether the band `reach` to either side of the hop was recently in view.
fn swept_seen(sim: &Sim, from: &Vec3, to: &Vec3, reach: f64) -> bool {
    let d = to - from;
    let len = d.norm();
    let side = Vec3::new(-d.y, d.x, 0.0) / len * reach;
    let steps = (len / 0.1).ceil() as usize;
    (1..=steps).all(|i| {
        let c = from + d * (i as f64 / steps as f64);
        [c, c + side, c - side].iter().all(|p| sim.recently_seen(p))
    })
}

fn run_frontier(sim: &mut Sim, rec: &mut Recorder) -> Result<()> {
    let cfg = sim.cfg;
    let half = cfg.robot.half_extents();
    let mut planner = FrontierPlanner::new(
        &sim.map,
        cfg.baseline.min_cluster_size,
        cfg.baseline.blacklist_radius,
    );
    loop {
        if let Some(t) = sim.limit() {
            rec.outcome.termination = t;
            return Ok(());
        }
        rec.outcome.iterations += 1;
        let t = Instant::now();
        let target = planner.next_target(&sim.map, &sim.pose.position, &half);
        let elapsed = secs(t);
        rec.timing.plan_iteration_times.push(elapsed);
        rec.timing.search_time += elapsed;
        rec.timing.computational_time += elapsed;
        let Some(target) = target else {
            rec.outcome.termination = Termination::NoFrontiers;
            return Ok(());
        };
        let yaws = motion_yaws(&target.path, sim.pose.yaw, target.final_yaw);
        rec.outcome.plans.push(PlanRecord {
            iteration: rec.outcome.iterations,
            sim_time: sim.time(),
            new_nodes: 0,
            nodes: 0,
            edges: 0,
            candidates: target.cluster_size,
            goal: Some(target.target),
            score: None,
            exec_time: Some(crate::planner::trajectory_time(
                &target.path,
                &yaws,
                sim.pose.yaw,
                cfg.robot.v_max,
                cfg.robot.omega_max,
            )),
            invalid_edges: 0,
        });
        let mut f = PathFollower::new(target.path.clone(), yaws)?;
        while !f.is_done() && sim.limit().is_none() {
            sim.tick(Some(&mut f))?;
        }
        planner.retire(&sim.map, target.target);
    }
}
