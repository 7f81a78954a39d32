//! Local waypoint refinement against the distance field.
//!
//! Each waypoint after the first may move inside a small box around where
//! the planner put it. Random-sampling coordinate descent trades travel time
//! against mean obstacle clearance, both normalized by the planner's
//! original trajectory.

use rand::Rng;

use crate::config::OptimizerConfig;
use crate::error::{Error, Result};
use crate::esdf::EsdfGrid;
use crate::geometry::{Aabb, Vec3};
use crate::occupancy::{OccupancyMap, VoxelState};
use crate::planner::{motion_yaws, trajectory_time, Trajectory};

/// Kinematic and spacing limits the optimized path must keep.
#[derive(Clone, Debug, PartialEq)]
pub struct PathLimits {
    pub half_extents: Vec3,
    pub v_max: f64,
    pub omega_max: f64,
    /// Maximum hop, `d_planner`.
    pub max_hop: f64,
    /// Minimum hop, `d_th_min`. The hop out of the fixed start is exempt.
    pub min_hop: f64,
}

impl PathLimits {
    pub fn from_config(cfg: &crate::config::Config) -> Self {
        Self {
            half_extents: cfg.robot.half_extents(),
            v_max: cfg.robot.v_max,
            omega_max: cfg.robot.omega_max,
            max_hop: cfg.sensor.planner_range,
            min_hop: cfg.sampler.d_th_min,
        }
    }
}

/// Travel time for `positions` with yaws re-derived from the geometry.
pub fn path_time(positions: &[Vec3], start_yaw: f64, final_yaw: f64, limits: &PathLimits) -> f64 {
    let yaws = motion_yaws(positions, start_yaw, final_yaw);
    trajectory_time(positions, &yaws, start_yaw, limits.v_max, limits.omega_max)
}

/// `w_t · t/t0 + w_d · d0/d`; infinite when the path touches an obstacle.
pub fn objective(t: f64, d: f64, t0: f64, d0: f64, cfg: &OptimizerConfig) -> f64 {
    if d <= 0.0 {
        return f64::INFINITY;
    }
    cfg.w_t * t / t0 + cfg.w_d * d0 / d
}

fn hop_ok(map: &OccupancyMap, a: &Vec3, b: &Vec3, limits: &PathLimits, check_min: bool) -> bool {
    let len = (b - a).norm();
    len <= limits.max_hop
        && (!check_min || len >= limits.min_hop)
        && map.is_segment_traversable(a, b, &limits.half_extents)
}

/// Every hop is traversable, no longer than `max_hop` and, except for the
/// hop out of the start, no shorter than `min_hop`.
pub fn feasible(positions: &[Vec3], map: &OccupancyMap, limits: &PathLimits) -> bool {
    positions
        .windows(2)
        .enumerate()
        .all(|(i, w)| hop_ok(map, &w[0], &w[1], limits, i > 0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizeOutcome {
    pub trajectory: Trajectory,
    pub t0: f64,
    pub t_opt: f64,
    pub d0: f64,
    pub d_opt: f64,
    pub objective0: f64,
    pub objective: f64,
    pub iterations: usize,
    /// The input violated a constraint and was returned unchanged.
    pub infeasible_input: bool,
}

fn box_from(center: &Vec3, extents: &[f64; 3]) -> Aabb {
    Aabb::from_center(center, &(Vec3::from(*extents) * 0.5))
}

fn draw(rng: &mut impl Rng, b: &Aabb) -> Vec3 {
    let mut p = Vec3::zeros();
    for i in 0..3 {
        p[i] = if b.max[i] > b.min[i] {
            rng.gen_range(b.min[i]..b.max[i])
        } else {
            b.min[i]
        };
    }
    p
}

pub fn optimize(
    trajectory: &Trajectory,
    map: &OccupancyMap,
    esdf: &EsdfGrid,
    limits: &PathLimits,
    cfg: &OptimizerConfig,
    rng: &mut impl Rng,
) -> Result<OptimizeOutcome> {
    if trajectory.waypoints.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let original = trajectory.positions();
    let start_yaw = trajectory.start_yaw;
    let final_yaw = trajectory.waypoints.last().unwrap().yaw;
    let t0 = path_time(&original, start_yaw, final_yaw, limits);
    let d0 = esdf.average_trajectory_distance(&original)?;
    let unchanged = |infeasible_input: bool| {
        let objective0 = objective(t0, d0, t0, d0, cfg);
        OptimizeOutcome {
            trajectory: trajectory.clone(),
            t0,
            t_opt: t0,
            d0,
            d_opt: d0,
            objective0,
            objective: objective0,
            iterations: 0,
            infeasible_input,
        }
    };
    if original.len() < 2 || t0 <= 0.0 || d0 <= 0.0 {
        return Ok(unchanged(false));
    }
    if !feasible(&original, map, limits) {
        return Ok(unchanged(true));
    }

    let score = |p: &[Vec3]| -> Result<(f64, f64, f64)> {
        let t = path_time(p, start_yaw, final_yaw, limits);
        let d = esdf.average_trajectory_distance(p)?;
        Ok((objective(t, d, t0, d0, cfg), t, d))
    };
    let mut current = original.clone();
    let (mut value, mut t_cur, mut d_cur) = score(&current)?;
    let objective0 = value;
    let mut iterations = 0;
    for _ in 0..cfg.max_iterations {
        iterations += 1;
        let before = value;
        for i in 1..current.len() {
            let region = box_from(&original[i], &cfg.local_box);
            let mut best: Option<(Vec3, f64, f64, f64)> = None;
            for _ in 0..cfg.samples_per_node {
                let p = draw(rng, &region);
                if map.state_at(&p) != Some(VoxelState::Free) {
                    continue;
                }
                let prev_ok = hop_ok(map, &current[i - 1], &p, limits, i > 1);
                let next_ok =
                    i + 1 == current.len() || hop_ok(map, &p, &current[i + 1], limits, true);
                if !(prev_ok && next_ok) {
                    continue;
                }
                let mut trial = current.clone();
                trial[i] = p;
                let (v, t, d) = score(&trial)?;
                if v < value && best.is_none_or(|b| v < b.1) {
                    best = Some((p, v, t, d));
                }
            }
            if let Some((p, v, t, d)) = best {
                current[i] = p;
                value = v;
                t_cur = t;
                d_cur = d;
            }
        }
        if before - value < cfg.min_relative_improvement * before.abs() {
            break;
        }
    }

    let yaws = motion_yaws(&current, start_yaw, final_yaw);
    let mut out = trajectory.clone();
    for ((w, p), y) in out.waypoints.iter_mut().zip(&current).zip(&yaws) {
        w.position = *p;
        w.yaw = *y;
    }
    out.exec_time = t_cur;
    out.score = if t_cur > 0.0 {
        out.gain_sum / t_cur
    } else {
        0.0
    };
    Ok(OptimizeOutcome {
        trajectory: out,
        t0,
        t_opt: t_cur,
        d0,
        d_opt: d_cur,
        objective0,
        objective: value,
        iterations,
        infeasible_input: false,
    })
}
