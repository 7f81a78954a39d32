//! Greedy frontier baseline: fly to the nearest cluster of free voxels that
//! border unknown space, look into the unknown, repeat.

use std::collections::VecDeque;

use crate::geometry::{azimuth, Vec3};
use crate::occupancy::{OccupancyMap, VoxelState};

/// Chebyshev reach, in cells, from an approach voxel to its frontier voxel.
const APPROACH: i64 = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct FrontierTarget {
    /// Robot position first, then simplified grid path to the target.
    pub path: Vec<Vec3>,
    /// Heading toward the unknown space behind the target.
    pub final_yaw: f64,
    pub target: usize,
    pub cluster_size: usize,
}

pub struct FrontierPlanner {
    blacklist: Vec<bool>,
    min_cluster: usize,
    blacklist_radius: f64,
}

impl FrontierPlanner {
    pub fn new(map: &OccupancyMap, min_cluster: usize, blacklist_radius: f64) -> Self {
        Self {
            blacklist: vec![false; map.len()],
            min_cluster,
            blacklist_radius,
        }
    }

    fn is_frontier(&self, map: &OccupancyMap, idx: usize) -> bool {
        let g = map.grid();
        !self.blacklist[idx]
            && g.neighbors6(g.coords(idx)).any(|n| {
                let j = g.index(n);
                map.state(j) == VoxelState::Unknown && map.is_interior(j)
            })
    }

    /// Never pick voxels near `target` again.
    pub fn retire(&mut self, map: &OccupancyMap, target: usize) {
        let g = map.grid();
        let c = g.center_of(target);
        let r = self.blacklist_radius;
        let cells = (r / g.resolution).ceil() as i64;
        let base = g.coords(target).map(|v| v as i64);
        self.blacklist[target] = true;
        for dz in -cells..=cells {
            for dy in -cells..=cells {
                for dx in -cells..=cells {
                    if let Some(n) = g.checked([base[0] + dx, base[1] + dy, base[2] + dz]) {
                        let j = g.index(n);
                        if (g.center_of(j) - c).norm() <= r {
                            self.blacklist[j] = true;
                        }
                    }
                }
            }
        }
    }

    /// Path to the nearest reachable frontier cluster, or `None` when no
    /// cluster remains.
    pub fn next_target(
        &self,
        map: &OccupancyMap,
        robot: &Vec3,
        half: &Vec3,
    ) -> Option<FrontierTarget> {
        let g = map.grid();
        let n = map.len();
        let mut clear: Vec<Option<bool>> = vec![None; n];
        let mut is_clear = |i: usize| -> bool {
            *clear[i].get_or_insert_with(|| {
                map.state(i) == VoxelState::Free
                    && map.is_interior(i)
                    && map.is_box_free(&g.center_of(i), half)
            })
        };

        // seed from voxel centers the robot can reach in one straight hop
        let mut dist = vec![u32::MAX; n];
        let mut parent = vec![usize::MAX; n];
        let mut queue = VecDeque::new();
        let base = g.cell_of(robot);
        for dz in -2..=2 {
            for dy in -2..=2 {
                for dx in -2..=2 {
                    let Some(c) = g.checked([base[0] + dx, base[1] + dy, base[2] + dz]) else {
                        continue;
                    };
                    let i = g.index(c);
                    if is_clear(i) && map.is_segment_traversable(robot, &g.center_of(i), half) {
                        dist[i] = 0;
                        queue.push_back(i);
                    }
                }
            }
        }
        while let Some(u) = queue.pop_front() {
            for nb in g.neighbors6(g.coords(u)) {
                let v = g.index(nb);
                if dist[v] == u32::MAX && is_clear(v) {
                    dist[v] = dist[u] + 1;
                    parent[v] = u;
                    queue.push_back(v);
                }
            }
        }

        // frontier voxels touch unknown space, so the robot box never fits on
        // them; clusters are approached from reachable voxels two cells away
        let frontier: Vec<usize> = (0..n)
            .filter(|&i| {
                map.state(i) == VoxelState::Free && map.is_interior(i) && self.is_frontier(map, i)
            })
            .collect();
        let mut in_frontier = vec![false; n];
        for &f in &frontier {
            in_frontier[f] = true;
        }
        let mut label = vec![usize::MAX; n];
        let mut best: Option<(u32, usize, Vec<usize>, Vec<usize>)> = None;
        let mut cluster_id = 0;
        for &f in &frontier {
            if label[f] != usize::MAX {
                continue;
            }
            let mut members = vec![f];
            label[f] = cluster_id;
            let mut k = 0;
            while k < members.len() {
                let u = members[k];
                k += 1;
                for nb in g.neighbors6(g.coords(u)) {
                    let v = g.index(nb);
                    if in_frontier[v] && label[v] == usize::MAX {
                        label[v] = cluster_id;
                        members.push(v);
                    }
                }
            }
            cluster_id += 1;
            if members.len() < self.min_cluster {
                continue;
            }
            let mut approach = Vec::new();
            for &m in &members {
                let c = g.coords(m).map(|v| v as i64);
                for dz in -APPROACH..=APPROACH {
                    for dy in -APPROACH..=APPROACH {
                        for dx in -APPROACH..=APPROACH {
                            if let Some(cc) = g.checked([c[0] + dx, c[1] + dy, c[2] + dz]) {
                                let j = g.index(cc);
                                if dist[j] != u32::MAX {
                                    approach.push(j);
                                }
                            }
                        }
                    }
                }
            }
            approach.sort_unstable();
            approach.dedup();
            let Some(d) = approach.iter().map(|&j| dist[j]).min() else {
                continue;
            };
            let first = *members.iter().min().unwrap();
            if best.as_ref().is_none_or(|b| (d, first) < (b.0, b.1)) {
                best = Some((d, first, members, approach));
            }
        }
        let (_, _, members, approach) = best?;
        let centroid = members
            .iter()
            .fold(Vec3::zeros(), |a, &i| a + g.center_of(i))
            / members.len() as f64;
        let target = *approach
            .iter()
            .min_by(|a, b| {
                let da = (g.center_of(**a) - centroid).norm();
                let db = (g.center_of(**b) - centroid).norm();
                da.total_cmp(&db).then(a.cmp(b))
            })
            .unwrap();

        let mut cells = vec![target];
        while dist[*cells.last().unwrap()] > 0 {
            cells.push(parent[*cells.last().unwrap()]);
        }
        cells.reverse();
        let mut raw = vec![*robot];
        raw.extend(cells.iter().map(|&i| g.center_of(i)));
        let path = shortcut(map, &raw, half);

        // look toward the unknown voxels bordering the cluster
        let mut unknown = Vec3::zeros();
        let mut count = 0.0;
        for &i in &members {
            for nb in g.neighbors6(g.coords(i)) {
                let j = g.index(nb);
                if map.state(j) == VoxelState::Unknown {
                    unknown += g.center_of(j);
                    count += 1.0;
                }
            }
        }
        let goal = g.center_of(target);
        let arrival = path
            .windows(2)
            .rev()
            .find_map(|w| azimuth(&(w[1] - w[0])))
            .unwrap_or(0.0);
        let final_yaw = if count > 0.0 {
            azimuth(&(unknown / count - goal)).unwrap_or(arrival)
        } else {
            arrival
        };
        Some(FrontierTarget {
            path,
            final_yaw,
            target,
            cluster_size: members.len(),
        })
    }
}

/// Greedy line-of-sight simplification of a grid path.
fn shortcut(map: &OccupancyMap, raw: &[Vec3], half: &Vec3) -> Vec<Vec3> {
    let mut out = vec![raw[0]];
    let mut i = 0;
    while i + 1 < raw.len() {
        let mut j = raw.len() - 1;
        while j > i + 1 && !map.is_segment_traversable(&raw[i], &raw[j], half) {
            j -= 1;
        }
        out.push(raw[j]);
        i = j;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::MapConfig;
    use crate::geometry::Aabb;

    const HALF: Vec3 = Vec3::new(0.2, 0.2, 0.15);

    /// 6 x 2 x 2 m corridor with the first 3 m known free.
    fn corridor() -> OccupancyMap {
        let bounds = Aabb::new(Vec3::zeros(), Vec3::new(6.0, 2.0, 2.0));
        let mut m = OccupancyMap::new(&bounds, &MapConfig::default());
        for i in 0..m.len() {
            if m.is_interior(i) && m.grid().center_of(i).x < 3.0 {
                m.set_state(i, VoxelState::Free);
            }
        }
        m
    }

    #[test]
    fn heads_for_the_unknown_end() {
        let m = corridor();
        let f = FrontierPlanner::new(&m, 4, 0.6);
        let robot = Vec3::new(0.5, 1.0, 1.0);
        let t = f.next_target(&m, &robot, &HALF).unwrap();
        let goal = *t.path.last().unwrap();
        // closest clear voxel to the frontier plane at x = 2.9
        assert!((goal.x - 2.7).abs() < 1e-9);
        assert!(t.final_yaw.abs() < 0.3);
        for w in t.path.windows(2) {
            assert!(m.is_segment_traversable(&w[0], &w[1], &HALF));
        }
        // a straight corridor collapses to a single hop
        assert_eq!(t.path.len(), 2);
    }

    #[test]
    fn retiring_everything_ends_the_search() {
        let m = corridor();
        let mut f = FrontierPlanner::new(&m, 4, 10.0);
        let robot = Vec3::new(0.5, 1.0, 1.0);
        let t = f.next_target(&m, &robot, &HALF).unwrap();
        f.retire(&m, t.target);
        assert!(f.next_target(&m, &robot, &HALF).is_none());
    }

    #[test]
    fn fully_known_map_has_no_frontier() {
        let bounds = Aabb::new(Vec3::zeros(), Vec3::new(3.0, 2.0, 2.0));
        let mut m = OccupancyMap::new(&bounds, &MapConfig::default());
        for i in 0..m.len() {
            if m.is_interior(i) {
                m.set_state(i, VoxelState::Free);
            }
        }
        let f = FrontierPlanner::new(&m, 1, 0.6);
        assert!(f
            .next_target(&m, &Vec3::new(1.0, 1.0, 1.0), &HALF)
            .is_none());
    }
}
