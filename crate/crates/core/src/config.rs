//! Parameter bundle carried by every scenario file.
//!
//! Defaults follow the published planner and quadcopter settings where they
//! exist; the rest are local choices and are all overridable from the
//! scenario file.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct Config {
    pub sensor: SensorModel,
    pub robot: RobotConfig,
    pub map: MapConfig,
    pub sampler: SamplerConfig,
    pub gain: GainParams,
    pub update: UpdateRuleConfig,
    pub planner: PlannerConfig,
    pub optimizer: OptimizerConfig,
    pub sim: SimConfig,
    pub baseline: BaselineConfig,
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.sensor.validate()?;
        self.robot.validate()?;
        self.map.validate()?;
        self.sampler.validate()?;
        self.gain_config().validate()?;
        self.update.validate()?;
        self.planner.validate()?;
        self.optimizer.validate()?;
        self.baseline.validate()?;
        self.sim.validate()
    }

    pub fn gain_config(&self) -> GainConfig {
        GainConfig {
            weights: self.gain.weights,
            sectors: self.gain.sectors,
            horizontal_fov_deg: self.sensor.fov_deg[0],
            vertical_fov_deg: self.sensor.fov_deg[1],
            range: self.sensor.planner_range,
        }
    }

    /// Local sampling box; defaults to `2·d_planner` per axis.
    pub fn local_box_extents(&self) -> Vec3 {
        match self.sampler.local_box_extents {
            Some(e) => Vec3::from(e),
            None => Vec3::repeat(2.0 * self.sensor.planner_range),
        }
    }

    pub fn update_radius(&self) -> f64 {
        self.update
            .trajectory_radius
            .unwrap_or(self.sensor.planner_range)
    }

    pub fn zero_distance_threshold(&self) -> f64 {
        self.update
            .zero_distance_threshold
            .unwrap_or(self.sampler.d_th_min)
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorModel {
    /// True camera range `d_max`.
    pub max_range: f64,
    /// Range used for gains, edges and waypoint spacing, `d_planner < d_max`.
    pub planner_range: f64,
    /// Horizontal and vertical field of view in degrees.
    pub fov_deg: [f64; 2],
    /// Rays across the horizontal and vertical field of view.
    pub ray_grid: [usize; 2],
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            max_range: 4.0,
            planner_range: 3.2,
            fov_deg: [103.2, 77.4],
            ray_grid: [64, 48],
        }
    }
}

impl SensorModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.planner_range > 0.0 && self.planner_range < self.max_range) {
            return Err(invalid("sensor: need 0 < planner_range < max_range"));
        }
        if self.fov_deg.iter().any(|f| !(*f > 0.0 && *f < 180.0)) {
            return Err(invalid("sensor: fov angles must lie in (0, 180) degrees"));
        }
        if self.ray_grid.contains(&0) {
            return Err(invalid("sensor: ray_grid counts must be positive"));
        }
        Ok(())
    }

    pub fn half_fov_rad(&self) -> (f64, f64) {
        (
            self.fov_deg[0].to_radians() * 0.5,
            self.fov_deg[1].to_radians() * 0.5,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotConfig {
    /// Full extents of the collision box in meters.
    pub collision_box: [f64; 3],
    pub v_max: f64,
    pub omega_max: f64,
}

impl Default for RobotConfig {
    fn default() -> Self {
        Self {
            collision_box: [0.4, 0.4, 0.3],
            v_max: 0.3,
            omega_max: 0.8,
        }
    }
}

impl RobotConfig {
    pub fn validate(&self) -> Result<()> {
        if self.collision_box.iter().any(|e| *e <= 0.0)
            || self.v_max <= 0.0
            || self.omega_max <= 0.0
        {
            return Err(invalid(
                "robot: box extents and velocity limits must be positive",
            ));
        }
        Ok(())
    }

    pub fn half_extents(&self) -> Vec3 {
        Vec3::from(self.collision_box) * 0.5
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    pub resolution: f64,
    pub log_odds_hit: f64,
    pub log_odds_miss: f64,
    pub log_odds_min: f64,
    pub log_odds_max: f64,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            resolution: 0.2,
            log_odds_hit: 0.85,
            log_odds_miss: -0.4,
            log_odds_min: -2.0,
            log_odds_max: 3.5,
        }
    }
}

impl MapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resolution <= 0.0 {
            return Err(invalid("map: resolution must be positive"));
        }
        if !(self.log_odds_hit > 0.0 && self.log_odds_miss < 0.0) {
            return Err(invalid(
                "map: hit increment must be positive, miss negative",
            ));
        }
        if !(self.log_odds_min < 0.0 && self.log_odds_max > 0.0) {
            return Err(invalid("map: log-odds clamp must straddle zero"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub d_th_min: f64,
    pub d_th_max: f64,
    pub n_max: usize,
    /// Local sampling box extents; `None` means `2·d_planner` per axis.
    pub local_box_extents: Option<[f64; 3]>,
    /// Rejection draws allowed to find one collision-free candidate before
    /// the draw counts as a failed sample.
    pub max_draws_per_candidate: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            d_th_min: 0.8,
            d_th_max: 1.5,
            n_max: 50,
            local_box_extents: None,
            max_draws_per_candidate: 200,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_th_min > 0.0 && self.d_th_min < self.d_th_max) {
            return Err(invalid("sampler: need 0 < d_th_min < d_th_max"));
        }
        if self.n_max < 1 || self.max_draws_per_candidate < 1 {
            return Err(invalid(
                "sampler: n_max and max_draws_per_candidate must be >= 1",
            ));
        }
        if let Some(e) = self.local_box_extents {
            if e.iter().any(|v| *v <= 0.0) {
                return Err(invalid("sampler: local box extents must be positive"));
            }
        }
        Ok(())
    }
}

/// Gain weights as stored in the scenario file; see [`GainConfig`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainParams {
    /// Weights for normal, frontier and surface unknown voxels.
    pub weights: [f64; 3],
    pub sectors: usize,
}

impl Default for GainParams {
    fn default() -> Self {
        Self {
            weights: [1.0, 2.0, 4.0],
            sectors: 32,
        }
    }
}

/// Everything node gain evaluation needs.
#[derive(Clone, Debug, PartialEq)]
pub struct GainConfig {
    pub weights: [f64; 3],
    pub sectors: usize,
    pub horizontal_fov_deg: f64,
    pub vertical_fov_deg: f64,
    pub range: f64,
}

impl Default for GainConfig {
    fn default() -> Self {
        Config::default().gain_config()
    }
}

impl GainConfig {
    pub fn validate(&self) -> Result<()> {
        let [wn, wf, ws] = self.weights;
        if !(wn > 0.0 && wf >= wn && ws >= wf) {
            return Err(invalid("gain: weights must satisfy w_s >= w_f >= w_n > 0"));
        }
        if self.sectors < 4 {
            return Err(invalid("gain: sector count must be >= 4"));
        }
        if self.range <= 0.0 {
            return Err(invalid("gain: range must be positive"));
        }
        Ok(())
    }

    pub fn sector_width(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.sectors as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UpdateRuleConfig {
    /// Radius around the executed path that defines the recorded set; `None` means `d_planner`.
    pub trajectory_radius: Option<f64>,
    pub zero_gain_threshold: f64,
    /// `None` means `d_th_min`.
    pub zero_distance_threshold: Option<f64>,
}

impl Default for UpdateRuleConfig {
    fn default() -> Self {
        Self {
            trajectory_radius: None,
            zero_gain_threshold: 5.0,
            zero_distance_threshold: None,
        }
    }
}

impl UpdateRuleConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: Option<f64>| v.is_none_or(|x| x > 0.0);
        if !(positive(self.trajectory_radius)
            && positive(self.zero_distance_threshold)
            && self.zero_gain_threshold > 0.0)
        {
            return Err(invalid("update: thresholds must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub lambda_regular: f64,
    pub lambda_replan: f64,
    pub termination_n: usize,
    /// Max goal candidates scored per iteration; `None` scores all of them.
    pub candidate_cap: Option<usize>,
    /// Collision prediction horizon in seconds.
    pub horizon: f64,
    /// Extra clearance added around detected obstacles when predicting conflicts.
    pub safety_margin: f64,
    /// How long a detected obstacle track survives without being re-observed.
    pub track_memory: f64,
    /// Time span over which obstacle velocity is differenced.
    pub velocity_window: f64,
    /// Detected obstacles are taken to be at least this wide in radius.
    pub min_obstacle_radius: f64,
    /// Obstacles out of view are taken to move at least this fast.
    pub min_obstacle_speed: f64,
    /// Replanning attempts per predicted conflict before holding position.
    pub replan_attempts: usize,
    /// Seconds to wait for a blocked trajectory to clear before planning anew.
    pub max_hold: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            lambda_regular: 0.5,
            lambda_replan: 0.8,
            termination_n: 3,
            candidate_cap: Some(15),
            horizon: 5.0,
            safety_margin: 0.3,
            track_memory: 5.0,
            velocity_window: 0.5,
            min_obstacle_radius: 0.3,
            min_obstacle_speed: 0.2,
            replan_attempts: 3,
            max_hold: 5.0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.lambda_regular
            && self.lambda_regular < self.lambda_replan
            && self.lambda_replan < 1.0)
        {
            return Err(invalid(
                "planner: need 0 < lambda_regular < lambda_replan < 1",
            ));
        }
        if self.termination_n == 0 || self.candidate_cap == Some(0) {
            return Err(invalid(
                "planner: termination_n and candidate_cap must be >= 1",
            ));
        }
        if self.horizon <= 0.0
            || self.safety_margin < 0.0
            || self.track_memory < 0.0
            || self.velocity_window < 0.0
            || self.min_obstacle_radius < 0.0
            || self.min_obstacle_speed < 0.0
        {
            return Err(invalid(
                "planner: horizon must be positive, margins non-negative",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub w_t: f64,
    pub w_d: f64,
    /// Full extents of the box each waypoint may move within.
    pub local_box: [f64; 3],
    pub max_iterations: usize,
    pub samples_per_node: usize,
    pub min_relative_improvement: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            w_t: 1.0,
            w_d: 1.0,
            local_box: [0.5, 0.5, 0.5],
            max_iterations: 10,
            samples_per_node: 20,
            min_relative_improvement: 1e-4,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.w_t > 0.0 && self.w_d > 0.0) {
            return Err(invalid("optimizer: weights must be positive"));
        }
        if self.local_box.iter().any(|e| *e < 0.0) {
            return Err(invalid("optimizer: local box extents must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    /// Wall-clock budget per run, seconds.
    pub budget_secs: f64,
    /// Simulated-time cap per run, seconds.
    pub max_sim_time: f64,
    /// Spacing of exploration-rate samples in simulated seconds.
    pub rate_sample_period: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            budget_secs: 600.0,
            max_sim_time: 3600.0,
            rate_sample_period: 1.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0
            && self.budget_secs > 0.0
            && self.max_sim_time > 0.0
            && self.rate_sample_period > 0.0)
        {
            return Err(invalid("sim: dt, budget and caps must be positive"));
        }
        Ok(())
    }
}

/// Greedy frontier baseline settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// Frontier clusters smaller than this many voxels are ignored.
    pub min_cluster_size: usize,
    /// Reached targets blacklist every frontier voxel within this radius.
    pub blacklist_radius: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            min_cluster_size: 4,
            blacklist_radius: 0.6,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_cluster_size == 0 || self.blacklist_radius < 0.0 {
            return Err(invalid(
                "baseline: min_cluster_size >= 1 and blacklist_radius >= 0",
            ));
        }
        Ok(())
    }
}
