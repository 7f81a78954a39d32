//! Small geometric helpers shared by the simulator, the map and the planner.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;

/// Wraps an angle into `[-π, π)`.
pub fn wrap_angle(angle: f64) -> f64 {
    if (-PI..PI).contains(&angle) {
        return angle;
    }
    let two_pi = 2.0 * PI;
    let mut a = (angle + PI).rem_euclid(two_pi) - PI;
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    if a >= PI {
        a -= two_pi;
    }
    a
}

/// Signed shortest rotation from `from` to `to`, in `[-π, π)`.
pub fn angle_diff(to: f64, from: f64) -> f64 {
    wrap_angle(to - from)
}

/// Azimuth of the horizontal component of `v`, or `None` for (near) vertical vectors.
pub fn azimuth(v: &Vec3) -> Option<f64> {
    if v.x.hypot(v.y) < 1e-9 {
        None
    } else {
        Some(v.y.atan2(v.x))
    }
}

/// Axis-aligned box given by its min and max corners.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self {
            min: [min.x, min.y, min.z],
            max: [max.x, max.y, max.z],
        }
    }

    pub fn from_center(center: &Vec3, half_extents: &Vec3) -> Self {
        Self::new(center - half_extents, center + half_extents)
    }

    pub fn min(&self) -> Vec3 {
        Vec3::from(self.min)
    }

    pub fn max(&self) -> Vec3 {
        Vec3::from(self.max)
    }

    pub fn extents(&self) -> Vec3 {
        self.max() - self.min()
    }

    pub fn center(&self) -> Vec3 {
        (self.min() + self.max()) * 0.5
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn contains_strict(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] > self.min[i] && p[i] < self.max[i])
    }

    /// Interiors overlap (touching faces do not count).
    pub fn overlaps(&self, other: &Aabb) -> bool {
        (0..3).all(|i| self.min[i] < other.max[i] && other.min[i] < self.max[i])
    }

    /// `other` lies entirely inside `self` (boundaries may touch).
    pub fn encloses(&self, other: &Aabb) -> bool {
        (0..3).all(|i| other.min[i] >= self.min[i] && other.max[i] <= self.max[i])
    }

    pub fn inflated(&self, by: &Vec3) -> Aabb {
        Aabb::new(self.min() - by, self.max() + by)
    }

    pub fn intersection(&self, other: &Aabb) -> Option<Aabb> {
        let mut out = *self;
        for i in 0..3 {
            out.min[i] = self.min[i].max(other.min[i]);
            out.max[i] = self.max[i].min(other.max[i]);
            if out.min[i] > out.max[i] {
                return None;
            }
        }
        Some(out)
    }

    /// Parametric entry/exit of the ray `origin + t·dir` through the box,
    /// clipped to `t ∈ [t_min, t_max]`. Returns `None` on a miss.
    pub fn ray_interval(
        &self,
        origin: &Vec3,
        dir: &Vec3,
        t_min: f64,
        t_max: f64,
    ) -> Option<(f64, f64)> {
        let mut lo = t_min;
        let mut hi = t_max;
        for i in 0..3 {
            if dir[i].abs() < 1e-15 {
                if origin[i] < self.min[i] || origin[i] > self.max[i] {
                    return None;
                }
            } else {
                let inv = 1.0 / dir[i];
                let mut t0 = (self.min[i] - origin[i]) * inv;
                let mut t1 = (self.max[i] - origin[i]) * inv;
                if t0 > t1 {
                    std::mem::swap(&mut t0, &mut t1);
                }
                lo = lo.max(t0);
                hi = hi.min(t1);
                if lo > hi {
                    return None;
                }
            }
        }
        Some((lo, hi))
    }

    /// Segment `a → b` passes through the open interior of the box.
    pub fn segment_pierces(&self, a: &Vec3, b: &Vec3) -> bool {
        let d = b - a;
        let mut lo = 0.0_f64;
        let mut hi = 1.0_f64;
        for i in 0..3 {
            if d[i].abs() < 1e-15 {
                if a[i] <= self.min[i] || a[i] >= self.max[i] {
                    return false;
                }
            } else {
                let inv = 1.0 / d[i];
                let mut t0 = (self.min[i] - a[i]) * inv;
                let mut t1 = (self.max[i] - a[i]) * inv;
                if t0 > t1 {
                    std::mem::swap(&mut t0, &mut t1);
                }
                lo = lo.max(t0);
                hi = hi.min(t1);
                if lo >= hi {
                    return false;
                }
            }
        }
        true
    }
}

/// Distance from `p` to the segment `a → b`.
pub fn point_segment_distance(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 < 1e-18 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Distance from `p` to a polyline; a single point is a degenerate polyline.
pub fn point_polyline_distance(p: &Vec3, polyline: &[Vec3]) -> f64 {
    match polyline {
        [] => f64::INFINITY,
        [only] => (p - only).norm(),
        _ => polyline
            .windows(2)
            .map(|w| point_segment_distance(p, &w[0], &w[1]))
            .fold(f64::INFINITY, f64::min),
    }
}

pub fn polyline_length(points: &[Vec3]) -> f64 {
    points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_angle_is_half_open() {
        assert_eq!(wrap_angle(PI), -PI);
        assert_eq!(wrap_angle(-PI), -PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!(wrap_angle(-1e-18) < PI);
    }

    #[test]
    fn segment_pierce_ignores_touching() {
        let b = Aabb::new(Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 1.0, 1.0));
        assert!(b.segment_pierces(&Vec3::new(-1.0, 0.5, 0.5), &Vec3::new(2.0, 0.5, 0.5)));
        // runs along a face
        assert!(!b.segment_pierces(&Vec3::new(-1.0, 0.0, 0.5), &Vec3::new(2.0, 0.0, 0.5)));
        assert!(!b.segment_pierces(&Vec3::new(-1.0, 0.5, 0.5), &Vec3::new(-0.1, 0.5, 0.5)));
    }

    #[test]
    fn polyline_distance() {
        let line = [Vec3::zeros(), Vec3::new(2.0, 0.0, 0.0)];
        assert!((point_polyline_distance(&Vec3::new(1.0, 1.0, 0.0), &line) - 1.0).abs() < 1e-12);
        assert!((point_polyline_distance(&Vec3::new(3.0, 0.0, 0.0), &line) - 1.0).abs() < 1e-12);
    }
}
