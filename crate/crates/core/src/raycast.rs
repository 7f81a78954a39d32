//! Dense voxel grid geometry and exact voxel traversal along segments.

use crate::geometry::{Aabb, Vec3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VoxelGrid {
    pub origin: Vec3,
    pub resolution: f64,
    pub dims: [usize; 3],
}

impl VoxelGrid {
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn extent(&self) -> Aabb {
        let size = Vec3::new(
            self.dims[0] as f64,
            self.dims[1] as f64,
            self.dims[2] as f64,
        ) * self.resolution;
        Aabb::new(self.origin, self.origin + size)
    }

    #[inline]
    pub fn index(&self, c: [usize; 3]) -> usize {
        c[0] + self.dims[0] * (c[1] + self.dims[1] * c[2])
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let x = idx % self.dims[0];
        let yz = idx / self.dims[0];
        [x, yz % self.dims[1], yz / self.dims[1]]
    }

    /// Signed cell coordinates of `p`, possibly out of range.
    #[inline]
    pub fn cell_of(&self, p: &Vec3) -> [i64; 3] {
        let q = (p - self.origin) / self.resolution;
        [q.x.floor() as i64, q.y.floor() as i64, q.z.floor() as i64]
    }

    #[inline]
    pub fn checked(&self, c: [i64; 3]) -> Option<[usize; 3]> {
        if (0..3).all(|i| c[i] >= 0 && (c[i] as usize) < self.dims[i]) {
            Some([c[0] as usize, c[1] as usize, c[2] as usize])
        } else {
            None
        }
    }

    pub fn voxel_of(&self, p: &Vec3) -> Option<usize> {
        self.checked(self.cell_of(p)).map(|c| self.index(c))
    }

    pub fn center(&self, c: [usize; 3]) -> Vec3 {
        self.origin
            + Vec3::new(c[0] as f64 + 0.5, c[1] as f64 + 0.5, c[2] as f64 + 0.5) * self.resolution
    }

    pub fn center_of(&self, idx: usize) -> Vec3 {
        self.center(self.coords(idx))
    }

    pub fn voxel_box(&self, c: [usize; 3]) -> Aabb {
        let lo = self.origin + Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64) * self.resolution;
        Aabb::new(lo, lo + Vec3::repeat(self.resolution))
    }

    /// Face neighbors inside the grid.
    pub fn neighbors6(&self, c: [usize; 3]) -> impl Iterator<Item = [usize; 3]> + '_ {
        const OFFSETS: [[i64; 3]; 6] = [
            [1, 0, 0],
            [-1, 0, 0],
            [0, 1, 0],
            [0, -1, 0],
            [0, 0, 1],
            [0, 0, -1],
        ];
        OFFSETS.iter().filter_map(move |o| {
            self.checked([c[0] as i64 + o[0], c[1] as i64 + o[1], c[2] as i64 + o[2]])
        })
    }

    /// Inclusive cell range covered by a box, clamped to the grid. `None` if the
    /// box sticks out of the grid.
    pub fn cell_range(&self, b: &Aabb) -> Option<([usize; 3], [usize; 3])> {
        let lo = self.cell_of(&b.min());
        // a box ending exactly on a cell face does not touch the next cell
        let q = (b.max() - self.origin) / self.resolution;
        let hi = [
            q.x.ceil() as i64 - 1,
            q.y.ceil() as i64 - 1,
            q.z.ceil() as i64 - 1,
        ];
        Some((self.checked(lo)?, self.checked(hi)?))
    }

    /// Visits, in order, every voxel pierced by the segment `a → b` (clipped
    /// to the grid). The visitor returns `false` to stop early. Returns
    /// `false` iff stopped early.
    pub fn traverse(&self, a: &Vec3, b: &Vec3, mut visit: impl FnMut(usize) -> bool) -> bool {
        let d = b - a;
        let Some((t0, t1)) = self.extent().ray_interval(a, &d, 0.0, 1.0) else {
            return true;
        };
        let start = a + d * t0;
        let end = a + d * t1;
        let clamp = |c: [i64; 3]| -> [i64; 3] {
            [
                c[0].clamp(0, self.dims[0] as i64 - 1),
                c[1].clamp(0, self.dims[1] as i64 - 1),
                c[2].clamp(0, self.dims[2] as i64 - 1),
            ]
        };
        let mut cell = clamp(self.cell_of(&start));
        let last = clamp(self.cell_of(&end));
        let mut step = [0i64; 3];
        let mut t_max = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        for i in 0..3 {
            if d[i] > 0.0 {
                step[i] = 1;
                let boundary = self.origin[i] + (cell[i] + 1) as f64 * self.resolution;
                t_max[i] = (boundary - a[i]) / d[i];
                t_delta[i] = self.resolution / d[i];
            } else if d[i] < 0.0 {
                step[i] = -1;
                let boundary = self.origin[i] + cell[i] as f64 * self.resolution;
                t_max[i] = (boundary - a[i]) / d[i];
                t_delta[i] = -self.resolution / d[i];
            }
        }
        let budget = (0..3)
            .map(|i| (last[i] - cell[i]).unsigned_abs())
            .sum::<u64>()
            + 1;
        for _ in 0..budget {
            let c = [cell[0] as usize, cell[1] as usize, cell[2] as usize];
            if !visit(self.index(c)) {
                return false;
            }
            if cell == last {
                break;
            }
            let axis = if t_max[0] <= t_max[1] && t_max[0] <= t_max[2] {
                0
            } else if t_max[1] <= t_max[2] {
                1
            } else {
                2
            };
            if t_max[axis] > t1 || cell[axis] == last[axis] {
                // numerical drift: jump along any axis that still needs stepping
                match (0..3).find(|&i| cell[i] != last[i]) {
                    Some(i) => {
                        cell[i] += step[i];
                        t_max[i] += t_delta[i];
                    }
                    None => break,
                }
                continue;
            }
            cell[axis] += step[axis];
            t_max[axis] += t_delta[axis];
        }
        true
    }
}
