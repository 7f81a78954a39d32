//! Turns labeled depth returns into moving-obstacle estimates.
//!
//! Ray labels are only used to group returns by object; position, size and
//! velocity come from the measured hit points alone. Objects are assumed to
//! be upright cylinders.

use std::collections::{BTreeMap, VecDeque};

use crate::geometry::Vec3;
use crate::grid_world::{HitTarget, LabeledRay};
use crate::planner::ObstacleEstimate;

#[derive(Clone, Debug)]
struct Track {
    /// (time, horizontal centroid) of recent observations.
    history: VecDeque<(f64, Vec3)>,
    radius: f64,
    z_min: f64,
    z_max: f64,
    last_seen: f64,
}

#[derive(Clone, Debug, Default)]
pub struct Tracker {
    tracks: BTreeMap<usize, Track>,
    window: f64,
    memory: f64,
    min_radius: f64,
    min_speed: f64,
}

impl Tracker {
    pub fn new(velocity_window: f64, memory: f64, min_radius: f64, min_speed: f64) -> Self {
        Self {
            tracks: BTreeMap::new(),
            window: velocity_window,
            memory,
            min_radius,
            min_speed,
        }
    }

    pub fn observe(&mut self, origin: &Vec3, rays: &[LabeledRay], time: f64) {
        let mut hits: BTreeMap<usize, Vec<Vec3>> = BTreeMap::new();
        for r in rays {
            if let (Some(HitTarget::Dynamic(i)), Some(range)) = (r.target, r.ray.range) {
                hits.entry(i)
                    .or_default()
                    .push(origin + r.ray.direction * range);
            }
        }
        for (id, pts) in hits {
            let (c, radius) = silhouette(origin, &pts, self.min_radius);
            let z_min = pts.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
            let z_max = pts.iter().map(|p| p.z).fold(f64::NEG_INFINITY, f64::max);
            let track = self.tracks.entry(id).or_insert_with(|| Track {
                history: VecDeque::new(),
                radius,
                z_min,
                z_max,
                last_seen: time,
            });
            // a track that went stale restarts its velocity history
            if time - track.last_seen > self.memory {
                track.history.clear();
            }
            track.history.push_back((time, c));
            while track.history.len() > 1 && time - track.history[0].0 > self.window + 1e-9 {
                track.history.pop_front();
            }
            // partial views only ever shrink the silhouette
            track.radius = track.radius.max(radius);
            track.z_min = z_min;
            track.z_max = z_max;
            track.last_seen = time;
        }
        let memory = self.memory;
        self.tracks
            .retain(|_, t| time - t.last_seen <= memory + 1e-9);
    }
}

/// Axis position and radius of an upright cylinder from hits on its visible
/// side: the radius is half the silhouette width across the line of sight
/// and the axis lies one radius behind the nearest hit. The radius is at
/// least `min_radius`.
fn silhouette(origin: &Vec3, pts: &[Vec3], min_radius: f64) -> (Vec3, f64) {
    let flat = |p: &Vec3| Vec3::new(p.x - origin.x, p.y - origin.y, 0.0);
    let mean = pts.iter().fold(Vec3::zeros(), |a, p| a + flat(p)) / pts.len() as f64;
    let Some(u) = mean.try_normalize(1e-9) else {
        return (Vec3::new(origin.x, origin.y, 0.0), min_radius);
    };
    let w = Vec3::new(-u.y, u.x, 0.0);
    let (mut lo, mut hi, mut near) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY);
    for p in pts {
        let q = flat(p);
        lo = lo.min(q.dot(&w));
        hi = hi.max(q.dot(&w));
        near = near.min(q.dot(&u));
    }
    let radius = (0.5 * (hi - lo)).max(min_radius);
    let c = u * (near + radius) + w * (0.5 * (lo + hi));
    (Vec3::new(origin.x + c.x, origin.y + c.y, 0.0), radius)
}

impl Tracker {
    /// Estimates at `time`. Tracks seen at `time` are extrapolated at their
    /// measured velocity; tracks out of view become a disc around the last
    /// sighting that grows at the last measured speed, or at least at the
    /// minimum speed.
    pub fn estimates(&self, time: f64) -> Vec<ObstacleEstimate> {
        self.tracks
            .values()
            .map(|t| {
                let (t1, c1) = *t
                    .history
                    .back()
                    .expect("tracks hold at least one observation");
                let (t0, c0) = t.history[0];
                let velocity = if t1 > t0 {
                    (c1 - c0) / (t1 - t0)
                } else {
                    Vec3::zeros()
                };
                let age = time - t1;
                if age <= 1e-9 {
                    ObstacleEstimate {
                        position: c1,
                        velocity,
                        radius: t.radius,
                        spread: 0.0,
                        z_min: t.z_min,
                        z_max: t.z_max,
                    }
                } else {
                    let speed = velocity.norm().max(self.min_speed);
                    ObstacleEstimate {
                        position: c1,
                        velocity: Vec3::zeros(),
                        radius: t.radius + speed * age,
                        spread: speed,
                        z_min: t.z_min,
                        z_max: t.z_max,
                    }
                }
            })
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }
}
