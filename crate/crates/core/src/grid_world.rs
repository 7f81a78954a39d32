//! Ground-truth world: static boxes, scripted walkers, a frustum depth camera
//! and kinematic stepping of the robot along a waypoint path.

use serde::{Deserialize, Serialize};

use crate::config::{Config, SensorModel};
use crate::error::{Error, Result};
use crate::geometry::{angle_diff, wrap_angle, Aabb, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    /// Radians in `[-π, π)`.
    pub yaw: f64,
}

impl Pose {
    pub fn new(position: Vec3, yaw: f64) -> Self {
        Self {
            position,
            yaw: wrap_angle(yaw),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptPoint {
    /// Center of the cylinder base.
    pub position: Vec3,
    /// Seconds spent standing at this point before moving on.
    #[serde(default)]
    pub hold: f64,
}

/// A walking person: an upright cylinder following a piecewise-linear script.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicObstacle {
    pub radius: f64,
    pub height: f64,
    pub speed: f64,
    #[serde(rename = "loop", default)]
    pub looped: bool,
    pub waypoints: Vec<ScriptPoint>,
}

impl DynamicObstacle {
    fn legs(&self) -> impl Iterator<Item = (Vec3, Vec3, f64)> + '_ {
        let n = self.waypoints.len();
        let count = if self.looped { n } else { n.saturating_sub(1) };
        (0..count).map(move |i| {
            let a = self.waypoints[i].position;
            let b = self.waypoints[(i + 1) % n].position;
            (a, b, self.waypoints[i].hold)
        })
    }

    /// Duration of one loop of the script, if it repeats.
    pub fn period(&self) -> Option<f64> {
        if !self.looped || self.waypoints.is_empty() {
            return None;
        }
        let p: f64 = self
            .legs()
            .map(|(a, b, hold)| hold + (b - a).norm() / self.speed)
            .sum();
        (p > 0.0).then_some(p)
    }

    /// Base-center position at time `t` (seconds, `t < 0` clamps to the start).
    pub fn position_at(&self, t: f64) -> Vec3 {
        let Some(first) = self.waypoints.first() else {
            return Vec3::zeros();
        };
        let mut t = t.max(0.0);
        if let Some(p) = self.period() {
            t = t.rem_euclid(p);
        }
        for (a, b, hold) in self.legs() {
            if t <= hold {
                return a;
            }
            t -= hold;
            let travel = (b - a).norm() / self.speed;
            if t <= travel {
                return a + (b - a) * (t / travel);
            }
            t -= travel;
        }
        if self.looped {
            first.position
        } else {
            self.waypoints.last().unwrap().position
        }
    }

    pub fn velocity_at(&self, t: f64) -> Vec3 {
        let h = 1e-3;
        (self.position_at(t + h) - self.position_at(t - h)) / (2.0 * h)
    }

    fn validate(&self, bounds: &Aabb) -> Result<()> {
        if self.radius <= 0.0 || self.height <= 0.0 || self.speed <= 0.0 {
            return Err(Error::InvalidScenario(
                "obstacle radius, height and speed must be positive".into(),
            ));
        }
        if self.waypoints.is_empty() {
            return Err(Error::InvalidScenario(
                "obstacle script needs at least one waypoint".into(),
            ));
        }
        // linear legs between inside points stay inside the (convex) bounds
        for w in &self.waypoints {
            let foot = Aabb::new(
                w.position - Vec3::new(self.radius, self.radius, 0.0),
                w.position + Vec3::new(self.radius, self.radius, self.height),
            );
            if !bounds.encloses(&foot) || w.hold < 0.0 {
                return Err(Error::InvalidScenario(
                    "obstacle waypoint leaves the world bounds".into(),
                ));
            }
        }
        Ok(())
    }

    /// Ray parameter of the first hit with this cylinder placed at `base`.
    fn ray_hit(&self, base: &Vec3, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        let (z0, z1) = (base.z, base.z + self.height);
        let ox = origin.x - base.x;
        let oy = origin.y - base.y;
        let mut best: Option<f64> = None;
        let mut keep = |t: f64| {
            if t >= 0.0 && best.is_none_or(|b| t < b) {
                best = Some(t);
            }
        };
        let a = dir.x * dir.x + dir.y * dir.y;
        if a > 1e-15 {
            let b = 2.0 * (ox * dir.x + oy * dir.y);
            let c = ox * ox + oy * oy - self.radius * self.radius;
            let disc = b * b - 4.0 * a * c;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                for t in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                    let z = origin.z + t * dir.z;
                    if z >= z0 && z <= z1 {
                        keep(t);
                    }
                }
            }
        }
        if dir.z.abs() > 1e-15 {
            for zc in [z0, z1] {
                let t = (zc - origin.z) / dir.z;
                let x = ox + t * dir.x;
                let y = oy + t * dir.y;
                if x * x + y * y <= self.radius * self.radius {
                    keep(t);
                }
            }
        }
        best
    }

    /// Whether the axis-aligned box overlaps this cylinder placed at `base`.
    fn overlaps_box(&self, base: &Vec3, b: &Aabb) -> bool {
        if !(b.min[2] < base.z + self.height && base.z < b.max[2]) {
            return false;
        }
        let cx = base.x.clamp(b.min[0], b.max[0]);
        let cy = base.y.clamp(b.min[1], b.max[1]);
        let (dx, dy) = (base.x - cx, base.y - cy);
        dx * dx + dy * dy < self.radius * self.radius
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    pub bounds: Aabb,
    pub robot_start: Pose,
    #[serde(default)]
    pub static_solids: Vec<Aabb>,
    #[serde(default)]
    pub dynamic_obstacles: Vec<DynamicObstacle>,
    #[serde(default)]
    pub config: Config,
}

/// What a scan ray stopped on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HitTarget {
    Static(usize),
    Dynamic(usize),
    Boundary,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub direction: Vec3,
    /// Distance to the first surface, or `None` when nothing lies within `d_max`.
    pub range: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabeledRay {
    pub ray: Ray,
    pub target: Option<HitTarget>,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn robot_box(&self, position: &Vec3) -> Aabb {
        Aabb::from_center(position, &self.config.robot.half_extents())
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if (0..3).any(|i| self.bounds.min[i] >= self.bounds.max[i]) {
            return Err(Error::InvalidScenario(
                "bounds must have positive extent".into(),
            ));
        }
        let start = self.robot_start.position;
        if !self.bounds.contains(&start) {
            return Err(Error::InvalidScenario(
                "robot start lies outside the bounds".into(),
            ));
        }
        let robot = self.robot_box(&start);
        if self.static_solids.iter().any(|s| s.overlaps(&robot)) {
            return Err(Error::InvalidScenario(
                "robot start collides with a static solid".into(),
            ));
        }
        for o in &self.dynamic_obstacles {
            o.validate(&self.bounds)?;
        }
        Ok(())
    }

    /// Point lies strictly inside a static solid.
    pub fn is_solid_point(&self, p: &Vec3) -> bool {
        self.static_solids.iter().any(|s| s.contains_strict(p))
    }

    /// Unit directions of the camera rays for a given yaw, row-major from the
    /// bottom-left of the frustum.
    pub fn ray_directions(sensor: &SensorModel, yaw: f64) -> Vec<Vec3> {
        let (hh, hv) = sensor.half_fov_rad();
        let [nh, nv] = sensor.ray_grid;
        let mut dirs = Vec::with_capacity(nh * nv);
        for j in 0..nv {
            let el = -hv + (j as f64 + 0.5) * (2.0 * hv / nv as f64);
            for i in 0..nh {
                let az = yaw - hh + (i as f64 + 0.5) * (2.0 * hh / nh as f64);
                dirs.push(Vec3::new(
                    el.cos() * az.cos(),
                    el.cos() * az.sin(),
                    el.sin(),
                ));
            }
        }
        dirs
    }

    /// Depth scan from `pose` at simulated time `time`.
    pub fn simulate_scan(&self, pose: &Pose, time: f64) -> Result<Vec<Ray>> {
        Ok(self
            .simulate_scan_labeled(pose, time)?
            .into_iter()
            .map(|r| r.ray)
            .collect())
    }

    /// Like [`Scenario::simulate_scan`] but also reports which object each ray hit.
    pub fn simulate_scan_labeled(&self, pose: &Pose, time: f64) -> Result<Vec<LabeledRay>> {
        let origin = pose.position;
        if !self.bounds.contains(&origin) {
            return Err(Error::out_of_bounds(&origin));
        }
        let d_max = self.config.sensor.max_range;
        let walkers: Vec<Vec3> = self
            .dynamic_obstacles
            .iter()
            .map(|o| o.position_at(time))
            .collect();
        let rays = Self::ray_directions(&self.config.sensor, pose.yaw)
            .into_iter()
            .map(|dir| {
                let (range, target) = self.cast(&origin, &dir, &walkers);
                if range <= d_max {
                    LabeledRay {
                        ray: Ray {
                            direction: dir,
                            range: Some(range),
                        },
                        target: Some(target),
                    }
                } else {
                    LabeledRay {
                        ray: Ray {
                            direction: dir,
                            range: None,
                        },
                        target: None,
                    }
                }
            })
            .collect();
        Ok(rays)
    }

    fn cast(&self, origin: &Vec3, dir: &Vec3, walkers: &[Vec3]) -> (f64, HitTarget) {
        let exit = self
            .bounds
            .ray_interval(origin, dir, 0.0, f64::INFINITY)
            .map_or(0.0, |(_, hi)| hi);
        let mut best = (exit, HitTarget::Boundary);
        for (i, solid) in self.static_solids.iter().enumerate() {
            if let Some((lo, _)) = solid.ray_interval(origin, dir, 0.0, best.0) {
                if lo < best.0 {
                    best = (lo, HitTarget::Static(i));
                }
            }
        }
        for (i, (o, base)) in self.dynamic_obstacles.iter().zip(walkers).enumerate() {
            if let Some(t) = o.ray_hit(base, origin, dir) {
                if t < best.0 {
                    best = (t, HitTarget::Dynamic(i));
                }
            }
        }
        best
    }

    /// Robot box at `pose` overlaps a solid, a walker at `time`, or leaves the bounds.
    pub fn check_ground_truth_collision(&self, pose: &Pose, time: f64) -> bool {
        let robot = self.robot_box(&pose.position);
        if !self.bounds.encloses(&robot) {
            return true;
        }
        if self.static_solids.iter().any(|s| s.overlaps(&robot)) {
            return true;
        }
        self.dynamic_obstacles
            .iter()
            .any(|o| o.overlaps_box(&o.position_at(time), &robot))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Motion {
    Translate(usize),
    Rotate(usize),
}

/// Cursor along a waypoint path under the rotate-then-translate model: the
/// robot flies to waypoint `i` keeping its yaw, turns in place to `yaw_i`,
/// then flies on to `i + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct PathFollower {
    positions: Vec<Vec3>,
    yaws: Vec<f64>,
    motion: Motion,
    done: bool,
}

impl PathFollower {
    pub fn new(positions: Vec<Vec3>, yaws: Vec<f64>) -> Result<Self> {
        if positions.is_empty() || positions.len() != yaws.len() {
            return Err(Error::EmptyTrajectory);
        }
        Ok(Self {
            positions,
            yaws,
            motion: Motion::Translate(0),
            done: false,
        })
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    /// Index of the waypoint currently being approached or turned at.
    pub fn current_index(&self) -> usize {
        match self.motion {
            Motion::Translate(i) | Motion::Rotate(i) => i,
        }
    }

    /// Advance by `dt` seconds of motion budget.
    pub fn step(&mut self, pose: &Pose, dt: f64, v_max: f64, omega_max: f64) -> Pose {
        let mut pose = *pose;
        let mut budget = dt;
        while !self.done {
            match self.motion {
                Motion::Translate(i) => {
                    let target = self.positions[i];
                    let delta = target - pose.position;
                    let dist = delta.norm();
                    let need = dist / v_max;
                    if need <= budget + 1e-9 {
                        pose.position = target;
                        budget = (budget - need).max(0.0);
                        self.motion = Motion::Rotate(i);
                    } else if budget > 0.0 {
                        pose.position += delta * (v_max * budget / dist);
                        break;
                    } else {
                        break;
                    }
                }
                Motion::Rotate(i) => {
                    let diff = angle_diff(self.yaws[i], pose.yaw);
                    let need = diff.abs() / omega_max;
                    if need <= budget + 1e-9 {
                        pose.yaw = wrap_angle(self.yaws[i]);
                        budget = (budget - need).max(0.0);
                        if i + 1 == self.positions.len() {
                            self.done = true;
                        } else {
                            self.motion = Motion::Translate(i + 1);
                        }
                    } else if budget > 0.0 {
                        pose.yaw = wrap_angle(pose.yaw + diff.signum() * omega_max * budget);
                        break;
                    } else {
                        break;
                    }
                }
            }
        }
        if self.done {
            let last = self.positions.len() - 1;
            pose = Pose::new(self.positions[last], self.yaws[last]);
        }
        pose
    }
}

/// One simulation tick of robot motion along the follower's path.
pub fn step_robot(
    pose: &Pose,
    follower: &mut PathFollower,
    dt: f64,
    v_max: f64,
    omega_max: f64,
) -> Pose {
    follower.step(pose, dt, v_max, omega_max)
}
