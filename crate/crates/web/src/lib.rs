//! Browser front end over the core crate: pick a shipped scenario, fly the
//! camera around by clicking, and look at the occupancy map, node gains and
//! the distance field on a horizontal slice at flight height.
//!
//! Everything here is plain Rust apart from the constructor's error type, so
//! the same code runs in native tests.

use dep_core::esdf::EsdfGrid;
use dep_core::gain::{evaluate_node, store};
use dep_core::planner::best_goal_yaw;
use dep_core::roadmap::Roadmap;
use dep_core::{Error, OccupancyMap, Pose, Result, Scenario, Vec3, VoxelState};
use wasm_bindgen::prelude::*;

const SCENARIOS: [(&str, &str); 6] = [
    ("room", include_str!("../../core/scenarios/room.toml")),
    ("maze", include_str!("../../core/scenarios/maze.toml")),
    (
        "corridor",
        include_str!("../../core/scenarios/corridor.toml"),
    ),
    (
        "room_dynamic",
        include_str!("../../core/scenarios/room_dynamic.toml"),
    ),
    (
        "maze_dynamic",
        include_str!("../../core/scenarios/maze_dynamic.toml"),
    ),
    (
        "corridor_dynamic",
        include_str!("../../core/scenarios/corridor_dynamic.toml"),
    ),
];

/// Seconds of script time that pass per scan, so walkers move between clicks.
const SCAN_PERIOD: f64 = 1.0;

/// Which layer `render` draws.
#[wasm_bindgen]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layer {
    Occupancy = 0,
    Distance = 1,
}

#[wasm_bindgen]
pub struct Demo {
    scenario: Scenario,
    map: OccupancyMap,
    pose: Pose,
    time: f64,
    scans: usize,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(name: &str) -> std::result::Result<Demo, JsError> {
        Demo::load(name).map_err(|e| JsError::new(&e.to_string()))
    }

    /// Names accepted by the constructor, comma separated.
    pub fn scenario_names() -> String {
        SCENARIOS.map(|(n, _)| n).join(",")
    }

    pub fn width(&self) -> usize {
        self.map.grid().dims[0]
    }

    pub fn height(&self) -> usize {
        self.map.grid().dims[1]
    }

    pub fn scans(&self) -> usize {
        self.scans
    }

    /// Robot position in (fractional) cell units.
    pub fn robot_cell_x(&self) -> f64 {
        let g = self.map.grid();
        (self.pose.position.x - g.origin.x) / g.resolution
    }

    pub fn robot_cell_y(&self) -> f64 {
        let g = self.map.grid();
        (self.pose.position.y - g.origin.y) / g.resolution
    }

    pub fn robot_yaw(&self) -> f64 {
        self.pose.yaw
    }

    /// Share of interior voxels that are no longer unknown, in percent.
    pub fn known_percent(&self) -> f64 {
        let interior = (0..self.map.len()).filter(|&i| self.map.is_interior(i));
        let (mut known, mut total) = (0usize, 0usize);
        for i in interior {
            total += 1;
            known += (self.map.state(i) != VoxelState::Unknown) as usize;
        }
        100.0 * known as f64 / total.max(1) as f64
    }

    /// Moves the camera to the clicked cell at flight height, facing away
    /// from where it was, and scans. Returns false (and stays put) when the
    /// robot would not fit there.
    pub fn fly_to(&mut self, cell_x: usize, cell_y: usize) -> bool {
        let target = self.cell_center(cell_x, cell_y);
        let step = target - self.pose.position;
        let yaw = if step.x.hypot(step.y) > 1e-9 {
            step.y.atan2(step.x)
        } else {
            self.pose.yaw
        };
        let pose = Pose::new(target, yaw);
        if self.scenario.check_ground_truth_collision(&pose, self.time) {
            return false;
        }
        self.pose = pose;
        self.scan().is_ok()
    }

    /// Turns in place by `delta` radians and scans.
    pub fn turn(&mut self, delta: f64) -> bool {
        self.pose = Pose::new(self.pose.position, self.pose.yaw + delta);
        self.scan().is_ok()
    }

    /// Total gain at the clicked cell and the yaw that sees the most of it,
    /// as `[gain, yaw]`; empty if the cell is not known free.
    pub fn gain_at(&self, cell_x: usize, cell_y: usize) -> Vec<f64> {
        self.gain_and_yaw(cell_x, cell_y)
            .map(|(g, y)| vec![g, y])
            .unwrap_or_default()
    }

    /// RGBA pixels, one per cell, rows from the top (largest y) down.
    pub fn render(&self, layer: Layer) -> Vec<u8> {
        let (w, h) = (self.width(), self.height());
        let g = *self.map.grid();
        let z = self.slice_z();
        let esdf = (layer == Layer::Distance).then(|| EsdfGrid::rebuild(&self.map));
        let mut px = Vec::with_capacity(w * h * 4);
        for row in 0..h {
            let y = h - 1 - row;
            for x in 0..w {
                let i = g.index([x, y, z]);
                let rgb = match &esdf {
                    None => match self.map.state(i) {
                        VoxelState::Unknown => [70, 70, 80],
                        VoxelState::Free => [235, 235, 225],
                        VoxelState::Occupied => [30, 30, 30],
                    },
                    Some(e) => heat(e.at(i)),
                };
                px.extend_from_slice(&[rgb[0], rgb[1], rgb[2], 255]);
            }
        }
        px
    }
}

impl Demo {
    pub fn load(name: &str) -> Result<Demo> {
        let text = SCENARIOS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .ok_or_else(|| Error::InvalidScenario(format!("no shipped scenario '{name}'")))?;
        let scenario = Scenario::from_toml(text)?;
        let map = OccupancyMap::new(&scenario.bounds, &scenario.config.map);
        let pose = scenario.robot_start;
        let mut demo = Demo {
            scenario,
            map,
            pose,
            time: 0.0,
            scans: 0,
        };
        demo.scan()?;
        Ok(demo)
    }

    pub fn map(&self) -> &OccupancyMap {
        &self.map
    }

    fn scan(&mut self) -> Result<()> {
        let rays = self.scenario.simulate_scan(&self.pose, self.time)?;
        self.map.integrate_scan(
            &self.pose.position,
            &rays,
            self.scenario.config.sensor.max_range,
        );
        self.time += SCAN_PERIOD;
        self.scans += 1;
        Ok(())
    }

    fn slice_z(&self) -> usize {
        let g = self.map.grid();
        let z = g.cell_of(&self.pose.position)[2];
        z.clamp(0, g.dims[2] as i64 - 1) as usize
    }

    fn cell_center(&self, x: usize, y: usize) -> Vec3 {
        let g = self.map.grid();
        let c = g.center([x.min(g.dims[0] - 1), y.min(g.dims[1] - 1), self.slice_z()]);
        Vec3::new(c.x, c.y, self.pose.position.z)
    }

    pub fn gain_and_yaw(&self, x: usize, y: usize) -> Option<(f64, f64)> {
        let cfg = self.scenario.config.gain_config();
        let p = self.cell_center(x, y);
        let gain = evaluate_node(&self.map, &p, &cfg).ok()?;
        let mut roadmap = Roadmap::new(self.scenario.config.sampler.d_th_max, cfg.sectors);
        let id = roadmap.add_node(p);
        let total = gain.total_gain;
        store(roadmap.node_mut(id).ok()?, gain);
        let yaw = best_goal_yaw(&roadmap, id, self.pose.yaw, &cfg).ok()?;
        Some((total, yaw))
    }
}

/// Blue near obstacles fading to yellow at 1.5 m and beyond.
fn heat(d: f64) -> [u8; 3] {
    let t = (d / 1.5).clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    [lerp(20.0, 250.0), lerp(40.0, 220.0), lerp(140.0, 60.0)]
}
