//! Euclidean distance field over the occupancy grid.
//!
//! Obstacles are OCCUPIED and UNKNOWN voxels, plus a virtual ring of
//! obstacles just outside the grid. Distances are exact center-to-center
//! Euclidean distances, computed with the separable lower-envelope transform
//! in integer voxel units.

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::occupancy::{OccupancyMap, VoxelState};
use crate::raycast::VoxelGrid;

#[derive(Clone, Debug)]
pub struct EsdfGrid {
    grid: VoxelGrid,
    /// Squared distance in voxel units.
    sq: Vec<u32>,
    dist: Vec<f64>,
}

impl EsdfGrid {
    pub fn rebuild(map: &OccupancyMap) -> Self {
        let obstacles: Vec<bool> = map
            .states()
            .iter()
            .map(|s| *s != VoxelState::Free)
            .collect();
        Self::from_obstacles(*map.grid(), &obstacles)
    }

    pub fn from_obstacles(grid: VoxelGrid, obstacles: &[bool]) -> Self {
        assert_eq!(obstacles.len(), grid.len());
        let [nx, ny, nz] = grid.dims;
        // padded working volume with the obstacle ring at index 0 and n + 1
        let pd = [nx + 2, ny + 2, nz + 2];
        let pidx = |x: usize, y: usize, z: usize| x + pd[0] * (y + pd[1] * z);
        let mut f = vec![0.0f64; pd[0] * pd[1] * pd[2]];
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    if !obstacles[grid.index([x, y, z])] {
                        f[pidx(x + 1, y + 1, z + 1)] = f64::INFINITY;
                    }
                }
            }
        }
        let longest = pd.iter().copied().max().unwrap();
        let mut scratch = Scratch::new(longest);
        let mut line = vec![0.0; longest];
        let mut out = vec![0.0; longest];
        for (axis, (a_len, b_len)) in [
            (0, (pd[1], pd[2])),
            (1, (pd[0], pd[2])),
            (2, (pd[0], pd[1])),
        ] {
            let n = pd[axis];
            for b in 0..b_len {
                for a in 0..a_len {
                    let at = |k: usize| match axis {
                        0 => pidx(k, a, b),
                        1 => pidx(a, k, b),
                        _ => pidx(a, b, k),
                    };
                    for k in 0..n {
                        line[k] = f[at(k)];
                    }
                    scratch.transform(&line[..n], &mut out[..n]);
                    for k in 0..n {
                        f[at(k)] = out[k];
                    }
                }
            }
        }
        let mut sq = vec![0u32; grid.len()];
        let mut dist = vec![0.0; grid.len()];
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let i = grid.index([x, y, z]);
                    sq[i] = f[pidx(x + 1, y + 1, z + 1)] as u32;
                    dist[i] = grid.resolution * f64::from(sq[i]).sqrt();
                }
            }
        }
        Self { grid, sq, dist }
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    /// Distance in meters at voxel `idx`.
    pub fn at(&self, idx: usize) -> f64 {
        self.dist[idx]
    }

    /// Squared distance in voxel units at `idx`.
    pub fn squared_cells(&self, idx: usize) -> u32 {
        self.sq[idx]
    }

    pub fn distances(&self) -> &[f64] {
        &self.dist
    }

    /// Trilinear interpolation between voxel centers.
    pub fn query_distance(&self, p: &Vec3) -> Result<f64> {
        if !self.grid.extent().contains(p) {
            return Err(Error::out_of_bounds(p));
        }
        let u = (p - self.grid.origin) / self.grid.resolution - Vec3::repeat(0.5);
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for i in 0..3 {
            let n = self.grid.dims[i];
            if n == 1 {
                continue;
            }
            // snap to exact centers so center queries return stored values
            let r = u[i].round();
            let ui = if (u[i] - r).abs() < 1e-9 { r } else { u[i] };
            let lo = ui.floor().clamp(0.0, (n - 2) as f64);
            base[i] = lo as usize;
            frac[i] = (ui - lo).clamp(0.0, 1.0);
        }
        let mut acc = 0.0;
        for corner in 0..8 {
            let mut w = 1.0;
            let mut c = base;
            for i in 0..3 {
                let bit = (corner >> i) & 1;
                if bit == 1 {
                    if self.grid.dims[i] == 1 {
                        w = 0.0;
                        break;
                    }
                    c[i] += 1;
                    w *= frac[i];
                } else {
                    w *= 1.0 - frac[i];
                }
            }
            if w != 0.0 {
                acc += w * self.dist[self.grid.index(c)];
            }
        }
        Ok(acc)
    }

    /// Mean distance over samples spaced at most one resolution apart along
    /// each segment, endpoints included.
    pub fn average_trajectory_distance(&self, positions: &[Vec3]) -> Result<f64> {
        let Some(first) = positions.first() else {
            return Err(Error::EmptyTrajectory);
        };
        let mut sum = self.query_distance(first)?;
        let mut count = 1usize;
        for w in positions.windows(2) {
            let len = (w[1] - w[0]).norm();
            let n = ((len / self.grid.resolution) - 1e-9).ceil().max(1.0) as usize;
            for k in 1..=n {
                let p = w[0] + (w[1] - w[0]) * (k as f64 / n as f64);
                sum += self.query_distance(&p)?;
                count += 1;
            }
        }
        Ok(sum / count as f64)
    }
}

/// Lower envelope of parabolas for the 1D squared distance transform.
struct Scratch {
    v: Vec<usize>,
    z: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Self {
            v: vec![0; n],
            z: vec![0.0; n + 1],
        }
    }

    fn transform(&mut self, f: &[f64], out: &mut [f64]) {
        let n = f.len();
        let mut k: isize = -1;
        for q in 0..n {
            if !f[q].is_finite() {
                continue;
            }
            let fq = f[q] + (q * q) as f64;
            loop {
                if k < 0 {
                    k = 0;
                    self.v[0] = q;
                    self.z[0] = f64::NEG_INFINITY;
                    self.z[1] = f64::INFINITY;
                    break;
                }
                let vk = self.v[k as usize];
                let s = (fq - (f[vk] + (vk * vk) as f64)) / (2.0 * (q as f64 - vk as f64));
                if s <= self.z[k as usize] {
                    k -= 1;
                    continue;
                }
                k += 1;
                self.v[k as usize] = q;
                self.z[k as usize] = s;
                self.z[k as usize + 1] = f64::INFINITY;
                break;
            }
        }
        if k < 0 {
            out.fill(f64::INFINITY);
            return;
        }
        let mut j = 0usize;
        for (q, o) in out.iter_mut().enumerate() {
            while self.z[j + 1] < q as f64 {
                j += 1;
            }
            let d = q as f64 - self.v[j] as f64;
            *o = d * d + f[self.v[j]];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> VoxelGrid {
        VoxelGrid {
            origin: Vec3::zeros(),
            resolution: 0.2,
            dims: [n, n, n],
        }
    }

    /// Squared voxel distance to the nearest obstacle, including the ring
    /// just outside the grid.
    pub(crate) fn brute_force_sq(grid: &VoxelGrid, obstacles: &[bool]) -> Vec<u32> {
        let occ: Vec<[i64; 3]> = (0..grid.len())
            .filter(|&i| obstacles[i])
            .map(|i| grid.coords(i).map(|c| c as i64))
            .collect();
        (0..grid.len())
            .map(|i| {
                let c = grid.coords(i);
                let ring = (0..3)
                    .map(|a| (c[a] as i64 + 1).min(grid.dims[a] as i64 - c[a] as i64))
                    .min()
                    .unwrap();
                let mut best = ring * ring;
                for o in &occ {
                    let d: i64 = (0..3).map(|a| (o[a] - c[a] as i64).pow(2)).sum();
                    best = best.min(d);
                }
                best as u32
            })
            .collect()
    }

    #[test]
    fn all_free_measures_distance_to_ring() {
        let g = grid(7);
        let e = EsdfGrid::from_obstacles(g, &vec![false; g.len()]);
        let center = g.index([3, 3, 3]);
        assert!((e.at(center) - 0.8).abs() < 1e-12);
        assert!((e.at(g.index([0, 3, 3])) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn single_obstacle_neighbor() {
        let g = grid(9);
        let mut obs = vec![false; g.len()];
        obs[g.index([4, 4, 4])] = true;
        let e = EsdfGrid::from_obstacles(g, &obs);
        assert_eq!(e.at(g.index([4, 4, 4])), 0.0);
        assert!((e.at(g.index([5, 4, 4])) - 0.2).abs() < 1e-12);
        assert!((e.at(g.index([5, 5, 5])) - 0.2 * 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn matches_brute_force_on_random_grids() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let g = VoxelGrid {
                origin: Vec3::zeros(),
                resolution: 0.2,
                dims: [
                    rng.gen_range(3..12),
                    rng.gen_range(3..12),
                    rng.gen_range(3..12),
                ],
            };
            let density = rng.gen_range(0.0..0.2);
            let obs: Vec<bool> = (0..g.len()).map(|_| rng.gen_bool(density)).collect();
            let e = EsdfGrid::from_obstacles(g, &obs);
            let expected = brute_force_sq(&g, &obs);
            assert_eq!(e.sq, expected);
        }
    }

    #[test]
    fn interpolation() {
        let g = VoxelGrid {
            origin: Vec3::zeros(),
            resolution: 0.2,
            dims: [5, 1, 1],
        };
        let mut obs = vec![false; 5];
        obs[0] = true;
        let e = EsdfGrid::from_obstacles(g, &obs);
        // ring along y/z is one voxel away everywhere, so use x only at 0 and 1
        assert_eq!(e.query_distance(&g.center([1, 0, 0])).unwrap(), e.at(1));
        let mid = (g.center([0, 0, 0]) + g.center([1, 0, 0])) * 0.5;
        assert!((e.query_distance(&mid).unwrap() - 0.5 * (e.at(0) + e.at(1))).abs() < 1e-12);
        assert!(e.query_distance(&Vec3::new(-0.1, 0.1, 0.1)).is_err());
    }

    #[test]
    fn empty_trajectory_is_an_error() {
        let g = grid(4);
        let e = EsdfGrid::from_obstacles(g, &vec![false; g.len()]);
        assert!(matches!(
            e.average_trajectory_distance(&[]),
            Err(Error::EmptyTrajectory)
        ));
        let p = g.center([1, 1, 1]);
        assert_eq!(
            e.average_trajectory_distance(&[p]).unwrap(),
            e.at(g.index([1, 1, 1]))
        );
    }
}
