//! Incrementally grown probabilistic roadmap.
//!
//! Nodes are never removed or moved. Sampling runs a local stage around the
//! robot and then a global stage over the world bounds; each stage keeps
//! drawing until more than `n_max` consecutive candidates land closer than
//! `d_th_min` to an existing node.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::io::Write;

use rand::Rng;

use crate::config::SamplerConfig;
use crate::error::{Error, Result};
use crate::geometry::{Aabb, Vec3};
use crate::occupancy::{OccupancyMap, VoxelState};

pub type NodeId = usize;

#[derive(Clone, Debug, PartialEq)]
pub struct RoadmapNode {
    pub id: NodeId,
    pub position: Vec3,
    /// Weighted unknown-voxel counts per yaw sector.
    pub sector_gains: Vec<f64>,
    pub total_gain: f64,
    /// Visible normal, frontier and surface unknown counts behind `total_gain`.
    pub class_counts: [u64; 3],
    pub needs_update: bool,
    /// (neighbor, edge length), sorted by neighbor id.
    pub adjacency: Vec<(NodeId, f64)>,
}

/// Exact nearest-neighbor and radius queries over node positions via a
/// uniform hash grid.
#[derive(Clone, Debug)]
struct SpatialHash {
    cell: f64,
    buckets: HashMap<[i64; 3], Vec<NodeId>>,
    lo: [i64; 3],
    hi: [i64; 3],
}

impl SpatialHash {
    fn new(cell: f64) -> Self {
        Self {
            cell,
            buckets: HashMap::new(),
            lo: [i64::MAX; 3],
            hi: [i64::MIN; 3],
        }
    }

    fn key(&self, p: &Vec3) -> [i64; 3] {
        [0, 1, 2].map(|i| (p[i] / self.cell).floor() as i64)
    }

    fn insert(&mut self, id: NodeId, p: &Vec3) {
        let k = self.key(p);
        for i in 0..3 {
            self.lo[i] = self.lo[i].min(k[i]);
            self.hi[i] = self.hi[i].max(k[i]);
        }
        self.buckets.entry(k).or_default().push(id);
    }

    fn shell(&self, center: [i64; 3], ring: i64, mut f: impl FnMut(&[NodeId])) {
        let range =
            |i: usize| (center[i] - ring).max(self.lo[i])..=(center[i] + ring).min(self.hi[i]);
        for x in range(0) {
            for y in range(1) {
                for z in range(2) {
                    let on_shell = (x - center[0]).abs() == ring
                        || (y - center[1]).abs() == ring
                        || (z - center[2]).abs() == ring;
                    if !on_shell {
                        continue;
                    }
                    if let Some(ids) = self.buckets.get(&[x, y, z]) {
                        f(ids);
                    }
                }
            }
        }
    }

    fn nearest(&self, p: &Vec3, positions: &[RoadmapNode]) -> Option<(NodeId, f64)> {
        if self.buckets.is_empty() {
            return None;
        }
        let c = self.key(p);
        let max_ring = (0..3)
            .map(|i| (c[i] - self.lo[i]).abs().max((self.hi[i] - c[i]).abs()))
            .max()
            .unwrap();
        let mut best: Option<(NodeId, f64)> = None;
        for ring in 0..=max_ring {
            self.shell(c, ring, |ids| {
                for &id in ids {
                    let d = (positions[id].position - p).norm();
                    let better = match best {
                        None => true,
                        Some((bid, bd)) => d < bd || (d == bd && id < bid),
                    };
                    if better {
                        best = Some((id, d));
                    }
                }
            });
            // anything in later shells is at least `ring · cell` away
            if let Some((_, d)) = best {
                if d < ring as f64 * self.cell {
                    break;
                }
            }
        }
        best
    }

    fn within(&self, p: &Vec3, radius: f64, positions: &[RoadmapNode]) -> Vec<NodeId> {
        let lo = self.key(&(p - Vec3::repeat(radius)));
        let hi = self.key(&(p + Vec3::repeat(radius)));
        let mut out = Vec::new();
        for x in lo[0]..=hi[0] {
            for y in lo[1]..=hi[1] {
                for z in lo[2]..=hi[2] {
                    if let Some(ids) = self.buckets.get(&[x, y, z]) {
                        out.extend(
                            ids.iter()
                                .copied()
                                .filter(|&id| (positions[id].position - p).norm() <= radius),
                        );
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Outcome of one sampling round.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleReport {
    pub new_ids: Vec<NodeId>,
    /// Candidates rejected for spacing or clearance in the local and global stage.
    pub rejected: [usize; 2],
}

#[derive(Clone, Debug)]
pub struct Roadmap {
    nodes: Vec<RoadmapNode>,
    index: SpatialHash,
    sectors: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct HeapItem(f64, NodeId);

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn same_cost(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

impl Roadmap {
    /// `cell` sizes the spatial hash; the connection radius is a good choice.
    pub fn new(cell: f64, sectors: usize) -> Self {
        Self {
            nodes: Vec::new(),
            index: SpatialHash::new(cell),
            sectors,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[RoadmapNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Result<&RoadmapNode> {
        self.nodes.get(id).ok_or(Error::UnknownNode(id))
    }

    pub fn node_mut(&mut self, id: NodeId) -> Result<&mut RoadmapNode> {
        self.nodes.get_mut(id).ok_or(Error::UnknownNode(id))
    }

    pub fn add_node(&mut self, position: Vec3) -> NodeId {
        let id = self.nodes.len();
        self.index.insert(id, &position);
        self.nodes.push(RoadmapNode {
            id,
            position,
            sector_gains: vec![0.0; self.sectors],
            total_gain: 0.0,
            class_counts: [0; 3],
            needs_update: true,
            adjacency: Vec::new(),
        });
        id
    }

    /// Adds an undirected edge; returns `false` if it already existed.
    pub fn add_edge(&mut self, a: NodeId, b: NodeId) -> Result<bool> {
        self.node(a)?;
        self.node(b)?;
        if a == b || self.has_edge(a, b) {
            return Ok(false);
        }
        let len = (self.nodes[a].position - self.nodes[b].position).norm();
        for (u, v) in [(a, b), (b, a)] {
            let adj = &mut self.nodes[u].adjacency;
            let at = adj.partition_point(|(n, _)| *n < v);
            adj.insert(at, (v, len));
        }
        Ok(true)
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.nodes
            .get(a)
            .is_some_and(|n| n.adjacency.binary_search_by_key(&b, |(id, _)| *id).is_ok())
    }

    pub fn edge_count(&self) -> usize {
        self.nodes.iter().map(|n| n.adjacency.len()).sum::<usize>() / 2
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, f64)> + '_ {
        self.nodes.iter().flat_map(|n| {
            n.adjacency
                .iter()
                .filter(move |(m, _)| n.id < *m)
                .map(move |(m, l)| (n.id, *m, *l))
        })
    }

    /// Closest node to `p`; ties go to the smaller id.
    pub fn nearest_node(&self, p: &Vec3) -> Result<NodeId> {
        self.nearest_with_distance(p).map(|(id, _)| id)
    }

    pub fn nearest_with_distance(&self, p: &Vec3) -> Result<(NodeId, f64)> {
        self.index
            .nearest(p, &self.nodes)
            .ok_or(Error::EmptyRoadmap)
    }

    /// Ids within `radius` of `p`, ascending.
    pub fn within_radius(&self, p: &Vec3, radius: f64) -> Vec<NodeId> {
        self.index.within(p, radius, &self.nodes)
    }

    /// Two-stage saturation sampling around `robot_position`.
    pub fn sample_incremental(
        &mut self,
        map: &OccupancyMap,
        robot_position: &Vec3,
        cfg: &SamplerConfig,
        local_extents: &Vec3,
        robot_half_extents: &Vec3,
        rng: &mut impl Rng,
    ) -> SampleReport {
        let mut report = SampleReport::default();
        if !map.states().contains(&VoxelState::Free) {
            return report;
        }
        let bounds = *map.interior();
        let local = Aabb::from_center(robot_position, &(local_extents * 0.5)).intersection(&bounds);
        for (stage, region) in [local, Some(bounds)].into_iter().enumerate() {
            let Some(region) = region else { continue };
            let mut failures = 0usize;
            while failures <= cfg.n_max {
                let candidate = (0..cfg.max_draws_per_candidate)
                    .map(|_| {
                        Vec3::new(
                            uniform(rng, region.min[0], region.max[0]),
                            uniform(rng, region.min[1], region.max[1]),
                            uniform(rng, region.min[2], region.max[2]),
                        )
                    })
                    .find(|p| map.is_box_free(p, robot_half_extents));
                let accepted = candidate.filter(|p| match self.index.nearest(p, &self.nodes) {
                    Some((_, d)) => d >= cfg.d_th_min,
                    None => true,
                });
                match accepted {
                    Some(p) => {
                        report.new_ids.push(self.add_node(p));
                        failures = 0;
                    }
                    None => {
                        failures += 1;
                        report.rejected[stage] += 1;
                    }
                }
            }
        }
        report
    }

    /// Links each new node to neighbors within `d_th_max` when the segment is
    /// traversable, no longer than `d_th_max` and within `sensor_range`.
    pub fn connect_new_nodes(
        &mut self,
        map: &OccupancyMap,
        new_ids: &[NodeId],
        sensor_range: f64,
        d_th_max: f64,
        robot_half_extents: &Vec3,
    ) -> Result<usize> {
        Ok(self
            .connect(map, new_ids, sensor_range, d_th_max, robot_half_extents)?
            .len())
    }

    /// Same rule as [`Roadmap::connect_new_nodes`] for any set of nodes;
    /// pairs that are already linked are skipped. Returns the added edges.
    pub fn connect(
        &mut self,
        map: &OccupancyMap,
        ids: &[NodeId],
        sensor_range: f64,
        d_th_max: f64,
        robot_half_extents: &Vec3,
    ) -> Result<Vec<(NodeId, NodeId)>> {
        for &id in ids {
            self.node(id)?;
        }
        let mut added = Vec::new();
        for &id in ids {
            let p = self.nodes[id].position;
            for other in self.within_radius(&p, d_th_max) {
                if other == id || self.has_edge(id, other) {
                    continue;
                }
                let q = self.nodes[other].position;
                let len = (p - q).norm();
                let c_dis = len <= d_th_max;
                let c_sensor = len <= sensor_range;
                if c_dis && c_sensor && map.is_segment_traversable(&p, &q, robot_half_extents) {
                    self.add_edge(id, other)?;
                    added.push((id, other));
                }
            }
        }
        Ok(added)
    }

    /// Cost-to-`target` for every node over edges accepted by `edge_ok`.
    fn costs_to(&self, target: NodeId, edge_ok: &dyn Fn(NodeId, NodeId) -> bool) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.nodes.len()];
        let mut heap = BinaryHeap::new();
        dist[target] = 0.0;
        heap.push(HeapItem(0.0, target));
        while let Some(HeapItem(d, u)) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &(v, w) in &self.nodes[u].adjacency {
                if !edge_ok(u, v) {
                    continue;
                }
                let nd = d + w;
                if nd < dist[v] {
                    dist[v] = nd;
                    heap.push(HeapItem(nd, v));
                }
            }
        }
        dist
    }

    /// Follows the cost field from `from` to `target`, always taking the
    /// smallest id among optimal continuations.
    fn walk(
        &self,
        from: NodeId,
        costs: &[f64],
        edge_ok: &dyn Fn(NodeId, NodeId) -> bool,
    ) -> Vec<NodeId> {
        let mut path = vec![from];
        let mut u = from;
        while costs[u] > 0.0 {
            let next = self.nodes[u]
                .adjacency
                .iter()
                .filter(|(v, w)| {
                    costs[*v] < costs[u] && edge_ok(u, *v) && same_cost(w + costs[*v], costs[u])
                })
                .map(|(v, _)| *v)
                .min()
                .expect("cost field is consistent");
            path.push(next);
            u = next;
        }
        path
    }

    /// Minimum-length path; ties resolve to the lexicographically smallest
    /// id sequence.
    pub fn shortest_path(&self, from: NodeId, to: NodeId) -> Result<Option<Vec<NodeId>>> {
        self.shortest_path_filtered(from, to, &|_, _| true)
    }

    pub fn shortest_path_filtered(
        &self,
        from: NodeId,
        to: NodeId,
        edge_ok: &dyn Fn(NodeId, NodeId) -> bool,
    ) -> Result<Option<Vec<NodeId>>> {
        self.node(from)?;
        self.node(to)?;
        let costs = self.costs_to(to, edge_ok);
        if !costs[from].is_finite() {
            return Ok(None);
        }
        Ok(Some(self.walk(from, &costs, edge_ok)))
    }

    /// Shortest path from a virtual start linked to `entries` (node, cost).
    /// Returns the path and its total cost.
    pub fn shortest_path_from_entries(
        &self,
        entries: &[(NodeId, f64)],
        to: NodeId,
        edge_ok: &dyn Fn(NodeId, NodeId) -> bool,
    ) -> Result<Option<(Vec<NodeId>, f64)>> {
        self.node(to)?;
        let costs = self.costs_to(to, edge_ok);
        let mut best: Option<(NodeId, f64)> = None;
        let mut sorted = entries.to_vec();
        sorted.sort_by_key(|(id, _)| *id);
        for (id, c) in sorted {
            self.node(id)?;
            let total = c + costs[id];
            if !total.is_finite() {
                continue;
            }
            match best {
                Some((_, b)) if !(total < b && !same_cost(total, b)) => {}
                _ => best = Some((id, total)),
            }
        }
        Ok(best.map(|(id, total)| (self.walk(id, &costs, edge_ok), total)))
    }

    pub fn path_length(&self, path: &[NodeId]) -> f64 {
        path.windows(2)
            .map(|w| (self.nodes[w[0]].position - self.nodes[w[1]].position).norm())
            .sum()
    }

    /// Pairs of distinct nodes closer than `d_min`.
    pub fn spacing_violations(&self, d_min: f64) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::new();
        for n in &self.nodes {
            for m in self.within_radius(&n.position, d_min) {
                if m > n.id && (self.nodes[m].position - n.position).norm() < d_min {
                    out.push((n.id, m));
                }
            }
        }
        out
    }

    /// Text snapshot: `node <id> <x> <y> <z> <total_gain>` lines followed by
    /// `edge <a> <b>` lines.
    pub fn write_snapshot(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "# nodes {} edges {}", self.len(), self.edge_count())?;
        for n in &self.nodes {
            writeln!(
                w,
                "node {} {:.4} {:.4} {:.4} {}",
                n.id, n.position.x, n.position.y, n.position.z, n.total_gain
            )?;
        }
        for (a, b, _) in self.edges() {
            writeln!(w, "edge {a} {b}")?;
        }
        Ok(())
    }
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}
