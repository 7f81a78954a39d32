//! Node information gain.
//!
//! A node's gain is the weighted number of unknown voxels it can expect to
//! see: every interior UNKNOWN voxel within planner range, inside the
//! vertical FoV band and with a line of sight through non-OCCUPIED voxels.
//! Each voxel is stored once, in the yaw sector holding its azimuth, so the
//! gain for any heading can be read back without raycasting.

use std::f64::consts::PI;

use crate::config::{GainConfig, UpdateRuleConfig};
use crate::error::{Error, Result};
use crate::geometry::{point_polyline_distance, Aabb, Vec3};
use crate::occupancy::{OccupancyMap, UnknownClass, VoxelState};
use crate::roadmap::{Roadmap, RoadmapNode};

#[derive(Clone, Debug, PartialEq)]
pub struct NodeGain {
    pub sector_gains: Vec<f64>,
    pub total_gain: f64,
    /// Visible normal, frontier and surface voxel counts.
    pub class_counts: [u64; 3],
}

impl NodeGain {
    fn zero(sectors: usize) -> Self {
        Self {
            sector_gains: vec![0.0; sectors],
            total_gain: 0.0,
            class_counts: [0; 3],
        }
    }
}

/// Sector holding azimuth `az`, sectors counted from -π.
pub fn sector_of(az: f64, cfg: &GainConfig) -> usize {
    let k = ((az + PI) / cfg.sector_width()).floor() as i64;
    k.rem_euclid(cfg.sectors as i64) as usize
}

pub fn evaluate_node(map: &OccupancyMap, position: &Vec3, cfg: &GainConfig) -> Result<NodeGain> {
    match map.state_at(position) {
        None => return Err(Error::out_of_bounds(position)),
        Some(VoxelState::Free) => {}
        Some(_) => return Err(Error::NotFree),
    }
    let grid = map.grid();
    let range = cfg.range;
    let tan_half_v = (cfg.vertical_fov_deg.to_radians() * 0.5).tan();
    let reach = Aabb::from_center(position, &Vec3::repeat(range)).intersection(&grid.extent());
    let mut out = NodeGain::zero(cfg.sectors);
    let Some(reach) = reach else {
        return Ok(out);
    };
    let lo = grid.cell_of(&reach.min()).map(|c| c.max(0) as usize);
    let hi =
        [0, 1, 2].map(|i| (grid.cell_of(&reach.max())[i].max(0) as usize).min(grid.dims[i] - 1));
    for z in lo[2]..=hi[2] {
        for y in lo[1]..=hi[1] {
            for x in lo[0]..=hi[0] {
                let idx = grid.index([x, y, z]);
                if map.state(idx) != VoxelState::Unknown || !map.is_interior(idx) {
                    continue;
                }
                let center = grid.center([x, y, z]);
                let d = center - position;
                if d.norm() > range {
                    continue;
                }
                let horizontal = d.x.hypot(d.y);
                if d.z.abs() > horizontal * tan_half_v {
                    continue;
                }
                let clear = grid.traverse(position, &center, |v| {
                    v == idx || map.state(v) != VoxelState::Occupied
                });
                if !clear {
                    continue;
                }
                let (class, w) = match map.classify_unchecked(idx) {
                    UnknownClass::Normal => (0, cfg.weights[0]),
                    UnknownClass::Frontier => (1, cfg.weights[1]),
                    UnknownClass::Surface => (2, cfg.weights[2]),
                };
                out.class_counts[class] += 1;
                out.sector_gains[sector_of(d.y.atan2(d.x), cfg)] += w;
            }
        }
    }
    out.total_gain = out.sector_gains.iter().sum();
    Ok(out)
}

/// Writes `gain` into the node and clears its stale flag.
pub fn store(node: &mut RoadmapNode, gain: NodeGain) {
    node.sector_gains = gain.sector_gains;
    node.total_gain = gain.total_gain;
    node.class_counts = gain.class_counts;
    node.needs_update = false;
}

fn zero_node(node: &mut RoadmapNode) {
    let sectors = node.sector_gains.len();
    store(node, NodeGain::zero(sectors));
}

/// Gain seen when facing `yaw`: sectors weighted by their angular overlap
/// with the horizontal FoV window.
pub fn gain_at_yaw(node: &RoadmapNode, yaw: f64, cfg: &GainConfig) -> Result<f64> {
    if node.needs_update {
        return Err(Error::StaleGain(node.id));
    }
    let w = cfg.sector_width();
    let half = (cfg.horizontal_fov_deg.to_radians() * 0.5).min(PI);
    let mut sum = 0.0;
    for (k, g) in node.sector_gains.iter().enumerate() {
        if *g == 0.0 {
            continue;
        }
        let start = -PI + k as f64 * w;
        let overlap: f64 = [-2.0 * PI, 0.0, 2.0 * PI]
            .iter()
            .map(|shift| {
                let a = start.max(yaw - half + shift);
                let b = (start + w).min(yaw + half + shift);
                (b - a).max(0.0)
            })
            .sum();
        sum += g * (overlap / w).min(1.0);
    }
    Ok(sum)
}

/// Evaluates every node flagged `needs_update`. Nodes whose voxel is no
/// longer FREE get zero gain. Returns how many nodes were evaluated.
pub fn evaluate_pending(roadmap: &mut Roadmap, map: &OccupancyMap, cfg: &GainConfig) -> usize {
    let pending: Vec<usize> = roadmap
        .nodes()
        .iter()
        .filter(|n| n.needs_update)
        .map(|n| n.id)
        .collect();
    for &id in &pending {
        refresh(roadmap, map, id, cfg);
    }
    pending.len()
}

fn refresh(roadmap: &mut Roadmap, map: &OccupancyMap, id: usize, cfg: &GainConfig) {
    let node = roadmap.node_mut(id).expect("id from roadmap");
    match evaluate_node(map, &node.position, cfg) {
        Ok(g) => store(node, g),
        Err(_) => zero_node(node),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct UpdateStats {
    /// Nodes within the trajectory radius.
    pub near: usize,
    pub zeroed: usize,
    pub reevaluated: usize,
}

/// Selective gain refresh around an executed path: nodes near the path with
/// little gain or lying on the path are zeroed, the rest are re-evaluated.
pub fn update_after_execution(
    roadmap: &mut Roadmap,
    map: &OccupancyMap,
    executed: &[Vec3],
    cfg: &GainConfig,
    rule: &UpdateRuleConfig,
    trajectory_radius: f64,
    zero_distance: f64,
) -> UpdateStats {
    let mut stats = UpdateStats::default();
    if executed.is_empty() {
        return stats;
    }
    let ids: Vec<usize> = roadmap.nodes().iter().map(|n| n.id).collect();
    for id in ids {
        let node = roadmap.node(id).expect("id from roadmap");
        let dist = point_polyline_distance(&node.position, executed);
        if dist > trajectory_radius {
            continue;
        }
        stats.near += 1;
        if node.total_gain < rule.zero_gain_threshold || dist < zero_distance {
            zero_node(roadmap.node_mut(id).expect("id from roadmap"));
            stats.zeroed += 1;
        } else {
            refresh(roadmap, map, id, cfg);
            stats.reevaluated += 1;
        }
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Config, MapConfig};
    use crate::raycast::VoxelGrid;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> GainConfig {
        Config::default().gain_config()
    }

    fn cube(n: usize) -> OccupancyMap {
        let grid = VoxelGrid {
            origin: Vec3::zeros(),
            resolution: 0.2,
            dims: [n, n, n],
        };
        OccupancyMap::with_grid(grid, grid.extent(), &MapConfig::default())
    }

    fn fill(map: &mut OccupancyMap, state: VoxelState) {
        for i in 0..map.len() {
            map.set_state(i, state);
        }
    }

    fn node(sector_gains: Vec<f64>) -> RoadmapNode {
        RoadmapNode {
            id: 0,
            position: Vec3::zeros(),
            total_gain: sector_gains.iter().sum(),
            sector_gains,
            class_counts: [0; 3],
            needs_update: false,
            adjacency: vec![],
        }
    }

    /// Visible-unknown count with line of sight tested against every
    /// occupied voxel box.
    fn brute_force(map: &OccupancyMap, p: &Vec3, cfg: &GainConfig) -> (f64, [u64; 3]) {
        let g = map.grid();
        let occupied: Vec<usize> = (0..map.len())
            .filter(|&i| map.state(i) == VoxelState::Occupied)
            .collect();
        let half_v = cfg.vertical_fov_deg.to_radians() / 2.0;
        let mut total = 0.0;
        let mut counts = [0u64; 3];
        for i in 0..map.len() {
            if map.state(i) != VoxelState::Unknown || !map.is_interior(i) {
                continue;
            }
            let c = g.center_of(i);
            let d = c - p;
            if d.norm() > cfg.range || d.z.atan2(d.x.hypot(d.y)).abs() > half_v {
                continue;
            }
            let blocked = occupied
                .iter()
                .any(|&o| g.voxel_box(g.coords(o)).segment_pierces(p, &c));
            if blocked {
                continue;
            }
            let nb = g.neighbors6(g.coords(i)).map(|n| map.state(g.index(n)));
            let (mut f, mut o) = (false, false);
            for s in nb {
                f |= s == VoxelState::Free;
                o |= s == VoxelState::Occupied;
            }
            let class = if f && o {
                2
            } else if f {
                1
            } else {
                0
            };
            counts[class] += 1;
            total += cfg.weights[class];
        }
        (total, counts)
    }

    #[test]
    fn known_free_space_has_no_gain() {
        let mut m = cube(12);
        fill(&mut m, VoxelState::Free);
        let g = evaluate_node(&m, &Vec3::new(1.2, 1.2, 1.2), &cfg()).unwrap();
        assert_eq!(g.total_gain, 0.0);
        assert!(g.sector_gains.iter().all(|s| *s == 0.0));
    }

    /// Free map whose only interior voxel is `target`, which is left unknown.
    fn lone_voxel(target: [usize; 3]) -> OccupancyMap {
        let grid = VoxelGrid {
            origin: Vec3::zeros(),
            resolution: 0.2,
            dims: [20, 20, 20],
        };
        let mut m = OccupancyMap::with_grid(grid, grid.voxel_box(target), &MapConfig::default());
        fill(&mut m, VoxelState::Free);
        m.set_state(grid.index(target), VoxelState::Unknown);
        m
    }

    #[test]
    fn one_voxel_of_each_class_sums_to_seven() {
        let t = [12, 10, 10];
        let pos = Vec3::new(1.01, 2.03, 2.05);
        let c = cfg();

        // normal: every neighbor unknown (neighbors lie outside the interior)
        let mut normal = lone_voxel(t);
        let g = *normal.grid();
        for n in g.neighbors6(t).collect::<Vec<_>>() {
            normal.set_state(g.index(n), VoxelState::Unknown);
        }
        // frontier: free neighbors only
        let frontier = lone_voxel(t);
        // surface: free neighbors and one occupied neighbor behind it
        let mut surface = lone_voxel(t);
        surface.set_state(g.index([13, 10, 10]), VoxelState::Occupied);

        let mut total = 0.0;
        let mut counts = [0u64; 3];
        for m in [&normal, &frontier, &surface] {
            let ng = evaluate_node(m, &pos, &c).unwrap();
            assert_eq!((ng.total_gain, ng.class_counts), brute_force(m, &pos, &c));
            total += ng.total_gain;
            for k in 0..3 {
                counts[k] += ng.class_counts[k];
            }
        }
        assert_eq!(counts, [1, 1, 1]);
        assert_eq!(total, 7.0);
    }

    #[test]
    fn occupied_voxels_block_and_unknown_do_not() {
        let mut m = cube(20);
        fill(&mut m, VoxelState::Free);
        let g = *m.grid();
        let target = [15, 10, 10];
        m.set_state(g.index(target), VoxelState::Unknown);
        let pos = g.center([5, 10, 10]) + Vec3::new(0.001, 0.002, 0.003);
        assert_eq!(evaluate_node(&m, &pos, &cfg()).unwrap().total_gain, 2.0);
        m.set_state(g.index([10, 10, 10]), VoxelState::Unknown);
        // the new unknown voxel is visible too, and the far one now has an
        // unknown neighbor but is still a frontier voxel
        assert_eq!(
            evaluate_node(&m, &pos, &cfg()).unwrap().class_counts,
            [0, 2, 0]
        );
        m.set_state(g.index([10, 10, 10]), VoxelState::Occupied);
        let ng = evaluate_node(&m, &pos, &cfg()).unwrap();
        assert_eq!(ng.total_gain, 0.0);
    }

    #[test]
    fn non_free_position_is_rejected() {
        let m = cube(10);
        assert!(matches!(
            evaluate_node(&m, &Vec3::repeat(1.0), &cfg()),
            Err(Error::NotFree)
        ));
        assert!(evaluate_node(&m, &Vec3::repeat(-1.0), &cfg()).is_err());
    }

    #[test]
    fn matches_brute_force_on_random_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let c = cfg();
        for _ in 0..8 {
            let mut m = cube(14);
            for i in 0..m.len() {
                let s = match rng.gen_range(0..10) {
                    0..=3 => VoxelState::Free,
                    4..=5 => VoxelState::Occupied,
                    _ => VoxelState::Unknown,
                };
                m.set_state(i, s);
            }
            let g = *m.grid();
            let cell = [7, 7, 7];
            m.set_state(g.index(cell), VoxelState::Free);
            let pos = g.center(cell)
                + Vec3::new(
                    rng.gen_range(-0.09..0.09),
                    rng.gen_range(-0.09..0.09),
                    rng.gen_range(-0.09..0.09),
                );
            let ng = evaluate_node(&m, &pos, &c).unwrap();
            assert_eq!((ng.total_gain, ng.class_counts), brute_force(&m, &pos, &c));
        }
    }

    #[test]
    fn uniform_sectors_give_k_times_g() {
        let mut c = cfg();
        c.sectors = 36;
        c.horizontal_fov_deg = 90.0;
        let n = node(vec![2.0; 36]);
        // window edges on sector boundaries: exactly nine sectors
        let yaw = -PI + 4.5 * c.sector_width();
        assert!((gain_at_yaw(&n, yaw, &c).unwrap() - 18.0).abs() < 1e-9);
        // any yaw gives the same total for a uniform field
        assert!((gain_at_yaw(&n, 1.234, &c).unwrap() - 18.0).abs() < 1e-9);
    }

    #[test]
    fn concentrated_gain_and_half_sector_shift() {
        let mut c = cfg();
        c.sectors = 36;
        c.horizontal_fov_deg = 90.0;
        let w = c.sector_width();
        let mut g = vec![0.0; 36];
        g[20] = 5.0;
        let n = node(g);
        let center = -PI + 20.5 * w;
        assert!((gain_at_yaw(&n, center, &c).unwrap() - 5.0).abs() < 1e-12);

        // aligned window covering sectors 0..9, then shifted by half a sector
        let mut g = vec![0.0; 36];
        g[0] = 1.0;
        g[9] = 1.0;
        let n = node(g);
        let aligned = -PI + 4.5 * w;
        assert!((gain_at_yaw(&n, aligned, &c).unwrap() - 1.0).abs() < 1e-12);
        let shifted = aligned + 0.5 * w;
        assert!((gain_at_yaw(&n, shifted, &c).unwrap() - 1.0).abs() < 1e-12);
        let mut g = vec![0.0; 36];
        g[0] = 1.0;
        let n = node(g);
        assert!((gain_at_yaw(&n, shifted, &c).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn window_wraps_around_pi() {
        let c = cfg();
        let mut g = vec![0.0; c.sectors];
        g[0] = 3.0;
        g[c.sectors - 1] = 4.0;
        let n = node(g);
        assert!((gain_at_yaw(&n, PI - 1e-12, &c).unwrap() - 7.0).abs() < 1e-9);
    }

    #[test]
    fn stale_node_is_an_error() {
        let mut n = node(vec![1.0; 32]);
        n.needs_update = true;
        assert!(matches!(
            gain_at_yaw(&n, 0.0, &cfg()),
            Err(Error::StaleGain(0))
        ));
    }

    fn world(n: usize) -> OccupancyMap {
        let mut m = cube(n);
        fill(&mut m, VoxelState::Unknown);
        m
    }

    #[test]
    fn update_rule_partitions_nearby_nodes() {
        let c = cfg();
        let rule = UpdateRuleConfig::default();
        let mut m = world(30);
        let g = *m.grid();
        for x in 2..28 {
            for y in 10..20 {
                for z in 5..10 {
                    m.set_state(g.index([x, y, z]), VoxelState::Free);
                }
            }
        }
        let mut r = Roadmap::new(1.5, c.sectors);
        let on_path = r.add_node(Vec3::new(1.0, 3.0, 1.4));
        let rich = r.add_node(Vec3::new(2.0, 3.9, 1.4));
        let poor = r.add_node(Vec3::new(3.0, 2.1, 1.4));
        let far = r.add_node(Vec3::new(5.4, 3.0, 1.4));
        evaluate_pending(&mut r, &m, &c);
        r.node_mut(poor).unwrap().total_gain = 4.0;
        r.node_mut(far).unwrap().total_gain = 99.0;
        let before_far = r.node(far).unwrap().clone();
        let path = [Vec3::new(0.6, 3.0, 1.4), Vec3::new(1.6, 3.0, 1.4)];
        let stats = update_after_execution(&mut r, &m, &path, &c, &rule, 3.2, 0.8);
        assert_eq!(
            stats,
            UpdateStats {
                near: 3,
                zeroed: 2,
                reevaluated: 1
            }
        );
        assert_eq!(r.node(on_path).unwrap().total_gain, 0.0);
        assert_eq!(r.node(poor).unwrap().total_gain, 0.0);
        assert!(r.node(rich).unwrap().total_gain > 0.0);
        assert_eq!(r.node(far).unwrap(), &before_far);

        let far_path = [Vec3::new(5.8, 5.8, 0.2)];
        let mut r2 = Roadmap::new(1.5, c.sectors);
        r2.add_node(Vec3::new(1.0, 3.0, 1.4));
        evaluate_pending(&mut r2, &m, &c);
        let stats = update_after_execution(&mut r2, &m, &far_path, &c, &rule, 3.2, 0.8);
        assert_eq!((stats.zeroed, stats.reevaluated), (0, 0));
    }

    #[test]
    fn revealing_a_neighbor_can_raise_weighted_gain() {
        // a frontier voxel becomes a surface voxel when the hidden voxel behind
        // it turns out occupied; the hidden voxel never counted, so the
        // weighted gain rises from 2 to 4 while the visible count drops
        let t = [12, 10, 10];
        let pos = Vec3::new(1.01, 2.03, 2.05);
        let mut m = lone_voxel(t);
        let g = *m.grid();
        m.set_state(g.index([13, 10, 10]), VoxelState::Unknown);
        let before = evaluate_node(&m, &pos, &cfg()).unwrap();
        m.set_state(g.index([13, 10, 10]), VoxelState::Occupied);
        let after = evaluate_node(&m, &pos, &cfg()).unwrap();
        assert_eq!((before.total_gain, after.total_gain), (2.0, 4.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn yaw_gain_bounded_by_total(gains in prop::collection::vec(0.0f64..50.0, 32), yaw in -PI..PI) {
            let n = node(gains);
            let c = cfg();
            prop_assert!(gain_at_yaw(&n, yaw, &c).unwrap() <= n.total_gain + 1e-9);
        }

        #[test]
        fn observing_never_raises_visible_count(seed in 0u64..1000, reveal in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = cfg();
            let mut m = cube(12);
            for i in 0..m.len() {
                let s = if rng.gen_bool(0.5) { VoxelState::Unknown } else if rng.gen_bool(0.8) { VoxelState::Free } else { VoxelState::Occupied };
                m.set_state(i, s);
            }
            let g = *m.grid();
            let cell = [6, 6, 6];
            m.set_state(g.index(cell), VoxelState::Free);
            let pos = g.center(cell) + Vec3::new(0.013, -0.021, 0.007);
            let before = evaluate_node(&m, &pos, &c).unwrap();
            prop_assert_eq!(before.sector_gains.iter().sum::<f64>(), before.total_gain);
            for i in 0..m.len() {
                if m.state(i) == VoxelState::Unknown && rng.gen_bool(reveal) {
                    let s = if rng.gen_bool(0.7) { VoxelState::Free } else { VoxelState::Occupied };
                    m.set_state(i, s);
                }
            }
            let after = evaluate_node(&m, &pos, &c).unwrap();
            let seen = |g: &NodeGain| g.class_counts.iter().sum::<u64>();
            prop_assert!(seen(&after) <= seen(&before));
        }
    }
}
