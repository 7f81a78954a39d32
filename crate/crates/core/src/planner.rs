//! Goal selection, trajectory scoring and dynamic-obstacle replanning.

use std::cell::RefCell;
use std::collections::{HashMap, HashSet};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::config::{Config, GainConfig};
use crate::error::{Error, Result};
use crate::gain::gain_at_yaw;
use crate::geometry::{angle_diff, azimuth, point_segment_distance, Vec3};
use crate::grid_world::{PathFollower, Pose};
use crate::occupancy::OccupancyMap;
use crate::roadmap::{NodeId, Roadmap};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    /// Roadmap node, or `None` for the robot's own start pose.
    pub node: Option<NodeId>,
    pub position: Vec3,
    pub yaw: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub waypoints: Vec<Waypoint>,
    /// Robot heading when the trajectory was planned.
    pub start_yaw: f64,
    /// Seconds, including the initial turn from `start_yaw`.
    pub exec_time: f64,
    /// Summed waypoint gain per second.
    pub score: f64,
    pub gain_sum: f64,
}

impl Trajectory {
    pub fn positions(&self) -> Vec<Vec3> {
        self.waypoints.iter().map(|w| w.position).collect()
    }

    pub fn yaws(&self) -> Vec<f64> {
        self.waypoints.iter().map(|w| w.yaw).collect()
    }

    pub fn goal(&self) -> Option<NodeId> {
        self.waypoints.last().and_then(|w| w.node)
    }

    pub fn follower(&self) -> Result<PathFollower> {
        PathFollower::new(self.positions(), self.yaws())
    }

    pub fn length(&self) -> f64 {
        crate::geometry::polyline_length(&self.positions())
    }
}

/// Everything plan and replan need besides the roadmap and the map.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanSettings {
    pub gain: GainConfig,
    pub half_extents: Vec3,
    pub v_max: f64,
    pub omega_max: f64,
    pub d_th_max: f64,
    pub d_planner: f64,
    pub candidate_cap: Option<usize>,
}

impl PlanSettings {
    pub fn from_config(cfg: &Config) -> Self {
        Self {
            gain: cfg.gain_config(),
            half_extents: cfg.robot.half_extents(),
            v_max: cfg.robot.v_max,
            omega_max: cfg.robot.omega_max,
            d_th_max: cfg.sampler.d_th_max,
            d_planner: cfg.sensor.planner_range,
            candidate_cap: cfg.planner.candidate_cap,
        }
    }
}

/// Nodes whose gain is at least `lambda` times the best gain, best first,
/// ties by id. Empty when every gain is zero.
pub fn goal_candidates(roadmap: &Roadmap, lambda: f64) -> Vec<NodeId> {
    goal_candidates_among(roadmap, lambda, |_| true)
}

/// [`goal_candidates`] over the nodes accepted by `keep` only.
pub fn goal_candidates_among(
    roadmap: &Roadmap,
    lambda: f64,
    keep: impl Fn(NodeId) -> bool,
) -> Vec<NodeId> {
    let best = roadmap
        .nodes()
        .iter()
        .filter(|n| keep(n.id))
        .map(|n| n.total_gain)
        .fold(0.0, f64::max);
    if best <= 0.0 {
        return Vec::new();
    }
    let mut ids: Vec<NodeId> = roadmap
        .nodes()
        .iter()
        .filter(|n| keep(n.id) && n.total_gain >= lambda * best)
        .map(|n| n.id)
        .collect();
    let nodes = roadmap.nodes();
    ids.sort_by(|a, b| {
        nodes[*b]
            .total_gain
            .total_cmp(&nodes[*a].total_gain)
            .then(a.cmp(b))
    });
    ids
}

/// Travel time under rotate-then-translate: every segment at `v_max` plus
/// every turn between consecutive waypoint yaws at `omega_max`.
pub fn execution_time(positions: &[Vec3], yaws: &[f64], v_max: f64, omega_max: f64) -> f64 {
    let travel: f64 = positions
        .windows(2)
        .map(|w| (w[1] - w[0]).norm() / v_max)
        .sum();
    let turns: f64 = yaws
        .windows(2)
        .map(|w| angle_diff(w[1], w[0]).abs() / omega_max)
        .sum();
    travel + turns
}

/// `execution_time` plus the turn from `start_yaw` onto the first waypoint.
pub fn trajectory_time(
    positions: &[Vec3],
    yaws: &[f64],
    start_yaw: f64,
    v_max: f64,
    omega_max: f64,
) -> f64 {
    let first = yaws
        .first()
        .map_or(0.0, |y| angle_diff(*y, start_yaw).abs() / omega_max);
    first + execution_time(positions, yaws, v_max, omega_max)
}

/// Yaws facing the direction of motion for every waypoint but the last,
/// which gets `final_yaw`. Vertical hops keep the previous heading.
pub fn motion_yaws(positions: &[Vec3], start_yaw: f64, final_yaw: f64) -> Vec<f64> {
    let mut yaws = Vec::with_capacity(positions.len());
    let mut heading = start_yaw;
    for w in positions.windows(2) {
        if let Some(az) = azimuth(&(w[1] - w[0])) {
            heading = az;
        }
        yaws.push(heading);
    }
    yaws.push(final_yaw);
    yaws
}

/// True iff each of the last `n` iterations added no nodes.
pub fn check_termination(new_node_counts: &[usize], n: usize) -> bool {
    new_node_counts.len() >= n
        && new_node_counts[new_node_counts.len() - n..]
            .iter()
            .all(|&c| c == 0)
}

/// Yaw maximizing the goal's gain over sector centers; ties go to the one
/// needing the smallest turn from `arrival`.
pub fn best_goal_yaw(
    roadmap: &Roadmap,
    goal: NodeId,
    arrival: f64,
    cfg: &GainConfig,
) -> Result<f64> {
    let node = roadmap.node(goal)?;
    let w = cfg.sector_width();
    let mut best = (f64::NEG_INFINITY, f64::INFINITY, arrival);
    for k in 0..cfg.sectors {
        let yaw = -PI + (k as f64 + 0.5) * w;
        let g = gain_at_yaw(node, yaw, cfg)?;
        let turn = angle_diff(yaw, arrival).abs();
        if g > best.0 || (g == best.0 && turn < best.1) {
            best = (g, turn, yaw);
        }
    }
    Ok(best.2)
}

fn key(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    (a.min(b), a.max(b))
}

/// Collects plan diagnostics for the harness log.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlanReport {
    pub trajectory: Option<Trajectory>,
    pub candidates: usize,
    pub scored: usize,
    pub invalid_edges: usize,
}

fn flat(p: &Vec3) -> Vec3 {
    Vec3::new(p.x, p.y, 0.0)
}

/// Horizontal distance from `p` to the segment `a → b`; walkers span the
/// full flight height, so conflicts are regions in plan view.
pub fn plan_view_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    point_segment_distance(&flat(p), &flat(a), &flat(b))
}

/// Edges within horizontal distance `radius` of any of `points`.
pub fn edges_near(roadmap: &Roadmap, points: &[Vec3], radius: f64) -> HashSet<(NodeId, NodeId)> {
    let nodes = roadmap.nodes();
    roadmap
        .edges()
        .filter(|(a, b, _)| {
            points
                .iter()
                .any(|p| plan_view_distance(p, &nodes[*a].position, &nodes[*b].position) <= radius)
        })
        .map(|(a, b, _)| key(a, b))
        .collect()
}

/// Best gain-per-second trajectory from `start` to one of the goal
/// candidates at cutoff `lambda`. Edges in `blocked` are never used and the
/// robot is not linked through any point in `avoid` (within `avoid_radius`).
#[allow(clippy::too_many_arguments)]
pub fn plan_with(
    roadmap: &Roadmap,
    map: &OccupancyMap,
    start: &Pose,
    lambda: f64,
    settings: &PlanSettings,
    blocked: &HashSet<(NodeId, NodeId)>,
    avoid: &[Vec3],
    avoid_radius: f64,
) -> Result<PlanReport> {
    if roadmap.is_empty() {
        return Err(Error::EmptyRoadmap);
    }
    let mut report = PlanReport::default();
    let entries = attach(roadmap, map, &start.position, settings, avoid, avoid_radius);
    if entries.is_empty() {
        return Ok(report);
    }
    // nodes in other roadmap components can never be reached, so they do
    // not compete for the best gain
    let reachable = reachable_from(roadmap, &entries, blocked);
    let mut candidates = goal_candidates_among(roadmap, lambda, |id| reachable[id]);
    report.candidates = candidates.len();
    if let Some(cap) = settings.candidate_cap {
        candidates.truncate(cap);
    }
    if candidates.is_empty() {
        return Ok(report);
    }
    let mut search = PathSearch::new(roadmap, map, settings, blocked, entries);
    let mut best: Option<(Trajectory, NodeId)> = None;
    for goal in candidates {
        let Some(path) = search.path_to(goal)? else {
            continue;
        };
        let Some(traj) = build(roadmap, start, &path, settings)? else {
            continue;
        };
        report.scored += 1;
        let better = match &best {
            None => true,
            Some((b, bg)) => {
                traj.score > b.score
                    || (traj.score == b.score
                        && (traj.exec_time < b.exec_time
                            || (traj.exec_time == b.exec_time && goal < *bg)))
            }
        };
        if better {
            best = Some((traj, goal));
        }
    }
    report.invalid_edges = search.invalid_edges;
    report.trajectory = best.map(|(t, _)| t);
    Ok(report)
}

/// Shortest-path queries from the robot with edges re-validated lazily
/// against the current map; the validity cache is shared across goals.
struct PathSearch<'a> {
    roadmap: &'a Roadmap,
    map: &'a OccupancyMap,
    settings: &'a PlanSettings,
    blocked: &'a HashSet<(NodeId, NodeId)>,
    entries: Vec<(NodeId, f64)>,
    valid: RefCell<HashMap<(NodeId, NodeId), bool>>,
    invalid_edges: usize,
}

impl<'a> PathSearch<'a> {
    fn new(
        roadmap: &'a Roadmap,
        map: &'a OccupancyMap,
        settings: &'a PlanSettings,
        blocked: &'a HashSet<(NodeId, NodeId)>,
        entries: Vec<(NodeId, f64)>,
    ) -> Self {
        Self {
            roadmap,
            map,
            settings,
            blocked,
            entries,
            valid: RefCell::new(HashMap::new()),
            invalid_edges: 0,
        }
    }

    /// Shortest path whose edges are all still traversable; an invalid edge
    /// is excluded and the search repeated.
    fn path_to(&mut self, goal: NodeId) -> Result<Option<Vec<NodeId>>> {
        loop {
            let found = {
                let valid = &self.valid;
                let blocked = self.blocked;
                let known_ok = |a: NodeId, b: NodeId| {
                    let k = key(a, b);
                    !blocked.contains(&k) && valid.borrow().get(&k).copied().unwrap_or(true)
                };
                self.roadmap
                    .shortest_path_from_entries(&self.entries, goal, &known_ok)?
            };
            let Some((path, _)) = found else {
                return Ok(None);
            };
            let mut all_ok = true;
            for w in path.windows(2) {
                let k = key(w[0], w[1]);
                let cached = self.valid.borrow().get(&k).copied();
                let ok = match cached {
                    Some(ok) => ok,
                    None => {
                        let a = self.roadmap.nodes()[w[0]].position;
                        let b = self.roadmap.nodes()[w[1]].position;
                        let ok =
                            self.map
                                .is_segment_traversable(&a, &b, &self.settings.half_extents);
                        self.valid.borrow_mut().insert(k, ok);
                        if !ok {
                            self.invalid_edges += 1;
                        }
                        ok
                    }
                };
                if !ok {
                    all_ok = false;
                    break;
                }
            }
            if all_ok {
                return Ok(Some(path));
            }
        }
    }
}

/// Trajectories to every node within `radius` of the robot, skipping edges
/// in `blocked` and robot links through `avoid`, ordered by execution time
/// then goal id. Used to step out of the way when holding still is unsafe.
#[allow(clippy::too_many_arguments)]
pub fn nearby_moves(
    roadmap: &Roadmap,
    map: &OccupancyMap,
    start: &Pose,
    radius: f64,
    settings: &PlanSettings,
    blocked: &HashSet<(NodeId, NodeId)>,
    avoid: &[Vec3],
    avoid_radius: f64,
) -> Result<Vec<Trajectory>> {
    let entries = attach(roadmap, map, &start.position, settings, avoid, avoid_radius);
    if entries.is_empty() {
        return Ok(Vec::new());
    }
    let mut search = PathSearch::new(roadmap, map, settings, blocked, entries);
    let mut out = Vec::new();
    for goal in roadmap.within_radius(&start.position, radius) {
        if let Some(path) = search.path_to(goal)? {
            if let Some(t) = build(roadmap, start, &path, settings)? {
                out.push((t, goal));
            }
        }
    }
    out.sort_by(|(a, ga), (b, gb)| a.exec_time.total_cmp(&b.exec_time).then(ga.cmp(gb)));
    Ok(out.into_iter().map(|(t, _)| t).collect())
}

fn reachable_from(
    roadmap: &Roadmap,
    entries: &[(NodeId, f64)],
    blocked: &HashSet<(NodeId, NodeId)>,
) -> Vec<bool> {
    let mut seen = vec![false; roadmap.len()];
    let mut stack: Vec<NodeId> = entries.iter().map(|(id, _)| *id).collect();
    for &id in &stack {
        seen[id] = true;
    }
    while let Some(u) = stack.pop() {
        for &(v, _) in &roadmap.nodes()[u].adjacency {
            if !seen[v] && !blocked.contains(&key(u, v)) {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen
}

/// Regular planning step.
pub fn plan(
    roadmap: &Roadmap,
    map: &OccupancyMap,
    start: &Pose,
    lambda: f64,
    settings: &PlanSettings,
) -> Result<PlanReport> {
    plan_with(
        roadmap,
        map,
        start,
        lambda,
        settings,
        &HashSet::new(),
        &[],
        0.0,
    )
}

/// Fast replanning: no sampling and no gain updates, only a search at the
/// raised cutoff that avoids the conflict region.
#[allow(clippy::too_many_arguments)]
pub fn replan(
    roadmap: &Roadmap,
    map: &OccupancyMap,
    start: &Pose,
    lambda_replan: f64,
    settings: &PlanSettings,
    conflict_points: &[Vec3],
    clearance: f64,
) -> Result<PlanReport> {
    let blocked = edges_near(roadmap, conflict_points, clearance);
    plan_with(
        roadmap,
        map,
        start,
        lambda_replan,
        settings,
        &blocked,
        conflict_points,
        clearance,
    )
}

/// Roadmap entry points for the robot: its nearest node when the link is
/// traversable, otherwise every traversable node within `d_th_max`.
fn attach(
    roadmap: &Roadmap,
    map: &OccupancyMap,
    p: &Vec3,
    settings: &PlanSettings,
    avoid: &[Vec3],
    avoid_radius: f64,
) -> Vec<(NodeId, f64)> {
    let usable = |id: NodeId| {
        let q = roadmap.nodes()[id].position;
        let d = (q - p).norm();
        d <= settings.d_th_max
            && avoid
                .iter()
                .all(|c| plan_view_distance(c, p, &q) > avoid_radius)
            && (d < 1e-9 || map.is_segment_traversable(p, &q, &settings.half_extents))
    };
    if let Ok(n) = roadmap.nearest_node(p) {
        if usable(n) {
            return vec![(n, (roadmap.nodes()[n].position - p).norm())];
        }
    }
    roadmap
        .within_radius(p, settings.d_th_max)
        .into_iter()
        .filter(|&id| usable(id))
        .map(|id| (id, (roadmap.nodes()[id].position - p).norm()))
        .collect()
}

/// Turns a node path into a scored trajectory starting at the robot pose.
/// Returns `None` for trajectories that take no time.
pub fn build(
    roadmap: &Roadmap,
    start: &Pose,
    path: &[NodeId],
    settings: &PlanSettings,
) -> Result<Option<Trajectory>> {
    let mut waypoints = Vec::with_capacity(path.len() + 1);
    let first = roadmap.node(path[0])?.position;
    if (first - start.position).norm() > 1e-9 {
        waypoints.push(Waypoint {
            node: None,
            position: start.position,
            yaw: start.yaw,
        });
    }
    for &id in path {
        waypoints.push(Waypoint {
            node: Some(id),
            position: roadmap.node(id)?.position,
            yaw: 0.0,
        });
    }
    let positions: Vec<Vec3> = waypoints.iter().map(|w| w.position).collect();
    let mut yaws = motion_yaws(&positions, start.yaw, 0.0);
    let arrival = if yaws.len() > 1 {
        yaws[yaws.len() - 2]
    } else {
        start.yaw
    };
    let goal = *path.last().expect("non-empty path");
    *yaws.last_mut().unwrap() = best_goal_yaw(roadmap, goal, arrival, &settings.gain)?;
    for (w, y) in waypoints.iter_mut().zip(&yaws) {
        w.yaw = *y;
    }
    let exec_time = trajectory_time(
        &positions,
        &yaws,
        start.yaw,
        settings.v_max,
        settings.omega_max,
    );
    if exec_time <= 0.0 {
        return Ok(None);
    }
    let mut gain_sum = 0.0;
    for w in &waypoints {
        if let Some(id) = w.node {
            gain_sum += gain_at_yaw(roadmap.node(id)?, w.yaw, &settings.gain)?;
        }
    }
    Ok(Some(Trajectory {
        waypoints,
        start_yaw: start.yaw,
        exec_time,
        score: gain_sum / exec_time,
        gain_sum,
    }))
}

/// A dynamic obstacle as the robot perceives it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObstacleEstimate {
    /// Horizontal center estimate; `z` is unused.
    pub position: Vec3,
    pub velocity: Vec3,
    pub radius: f64,
    /// Rate at which the radius grows over the prediction horizon, for
    /// obstacles that are out of view and could be anywhere they can reach.
    pub spread: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl ObstacleEstimate {
    pub fn at(&self, t: f64) -> Vec3 {
        self.position + self.velocity * t
    }

    /// Robot box at `robot` (inflated by radius plus `margin`) contains the
    /// obstacle axis at time `t`.
    pub fn conflicts(&self, t: f64, robot: &Vec3, half: &Vec3, margin: f64) -> bool {
        let c = self.at(t);
        let r = self.radius + self.spread * t + margin;
        (c.x - robot.x).abs() <= half.x + r
            && (c.y - robot.y).abs() <= half.y + r
            && robot.z - half.z <= self.z_max + margin
            && robot.z + half.z >= self.z_min - margin
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Conflict {
    pub time: f64,
    pub robot_position: Vec3,
    pub obstacle: usize,
    pub obstacle_position: Vec3,
}

/// First predicted conflict between the robot (continuing along `follower`,
/// or holding still if there is none) and the extrapolated obstacles,
/// sampled every `dt` seconds up to `horizon`.
#[allow(clippy::too_many_arguments)]
pub fn predict_collision(
    follower: Option<&PathFollower>,
    pose: &Pose,
    obstacles: &[ObstacleEstimate],
    horizon: f64,
    dt: f64,
    v_max: f64,
    omega_max: f64,
    half: &Vec3,
    margin: f64,
) -> Option<Conflict> {
    if obstacles.is_empty() {
        return None;
    }
    let mut f = follower.cloned();
    let mut robot = *pose;
    let steps = (horizon / dt).round() as usize;
    for k in 0..=steps {
        let t = k as f64 * dt;
        if k > 0 {
            if let Some(f) = f.as_mut() {
                robot = f.step(&robot, dt, v_max, omega_max);
            }
        }
        for (i, o) in obstacles.iter().enumerate() {
            if o.conflicts(t, &robot.position, half, margin) {
                return Some(Conflict {
                    time: t,
                    robot_position: robot.position,
                    obstacle: i,
                    obstacle_position: o.at(t),
                });
            }
        }
    }
    None
}
