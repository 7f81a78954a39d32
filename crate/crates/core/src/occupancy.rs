//! The robot's volumetric belief.
//!
//! A dense log-odds grid covering the world bounds plus one voxel of padding
//! on every side. Scans that stop on the world boundary mark the padding
//! layer occupied, so the boundary behaves like a wall without stealing a
//! layer of free space from inside the bounds.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config::MapConfig;
use crate::error::{Error, Result};
use crate::geometry::{Aabb, Vec3};
use crate::grid_world::Ray;
use crate::raycast::VoxelGrid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VoxelState {
    Unknown,
    Free,
    Occupied,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnknownClass {
    Normal,
    Frontier,
    Surface,
}

const NO_MARK: u8 = 0;
const MARK_MISS: u8 = 1;
const MARK_HIT: u8 = 2;

#[derive(Clone, Debug)]
pub struct OccupancyMap {
    grid: VoxelGrid,
    /// World bounds; voxels outside it are padding.
    interior: Aabb,
    params: MapConfig,
    states: Vec<VoxelState>,
    log_odds: Vec<f64>,
    marks: Vec<u8>,
    touched: Vec<usize>,
}

impl OccupancyMap {
    /// Map covering `bounds` with one padding voxel around it.
    pub fn new(bounds: &Aabb, params: &MapConfig) -> Self {
        let r = params.resolution;
        let ext = bounds.extents();
        let dims = [0, 1, 2].map(|i| (ext[i] / r - 1e-9).ceil().max(1.0) as usize + 2);
        let grid = VoxelGrid {
            origin: bounds.min() - Vec3::repeat(r),
            resolution: r,
            dims,
        };
        Self::with_grid(grid, *bounds, params)
    }

    /// Map over an explicit grid; `interior` marks the region considered
    /// inside the world.
    pub fn with_grid(grid: VoxelGrid, interior: Aabb, params: &MapConfig) -> Self {
        let n = grid.len();
        Self {
            grid,
            interior,
            params: params.clone(),
            states: vec![VoxelState::Unknown; n],
            log_odds: vec![0.0; n],
            marks: vec![NO_MARK; n],
            touched: Vec::new(),
        }
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    pub fn interior(&self) -> &Aabb {
        &self.interior
    }

    pub fn resolution(&self) -> f64 {
        self.grid.resolution
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    #[inline]
    pub fn state(&self, idx: usize) -> VoxelState {
        self.states[idx]
    }

    pub fn states(&self) -> &[VoxelState] {
        &self.states
    }

    pub fn log_odds(&self, idx: usize) -> f64 {
        self.log_odds[idx]
    }

    pub fn state_at(&self, p: &Vec3) -> Option<VoxelState> {
        self.grid.voxel_of(p).map(|i| self.states[i])
    }

    /// Voxel center lies inside the world bounds.
    pub fn is_interior(&self, idx: usize) -> bool {
        self.interior.contains_strict(&self.grid.center_of(idx))
    }

    /// Directly set a voxel; used to build maps in tests and demos.
    pub fn set_state(&mut self, idx: usize, state: VoxelState) {
        self.states[idx] = state;
        self.log_odds[idx] = match state {
            VoxelState::Unknown => 0.0,
            VoxelState::Free => self.params.log_odds_miss,
            VoxelState::Occupied => self.params.log_odds_hit,
        };
    }

    pub fn count(&self, state: VoxelState) -> usize {
        self.states.iter().filter(|s| **s == state).count()
    }

    /// Fuses one depth scan taken from `origin`. Each voxel receives at most
    /// one update per scan; a hit beats a miss. Returns the voxels whose
    /// state changed.
    pub fn integrate_scan(&mut self, origin: &Vec3, rays: &[Ray], max_range: f64) -> Vec<usize> {
        const NUDGE: f64 = 1e-6;
        let mut touched = std::mem::take(&mut self.touched);
        touched.clear();
        for ray in rays {
            let (carve_to, hit) = match ray.range {
                Some(range) if range <= max_range => (
                    range - NUDGE,
                    Some(origin + ray.direction * (range + NUDGE)),
                ),
                _ => (max_range, None),
            };
            let end = origin + ray.direction * carve_to.max(0.0);
            let marks = &mut self.marks;
            self.grid.traverse(origin, &end, |idx| {
                if marks[idx] == NO_MARK {
                    marks[idx] = MARK_MISS;
                    touched.push(idx);
                }
                true
            });
            if let Some(idx) = hit.and_then(|p| self.grid.voxel_of(&p)) {
                if marks[idx] == NO_MARK {
                    touched.push(idx);
                }
                marks[idx] = MARK_HIT;
            }
        }
        let mut changed = Vec::new();
        for &idx in &touched {
            let delta = if self.marks[idx] == MARK_HIT {
                self.params.log_odds_hit
            } else {
                self.params.log_odds_miss
            };
            self.marks[idx] = NO_MARK;
            let lo = (self.log_odds[idx] + delta)
                .clamp(self.params.log_odds_min, self.params.log_odds_max);
            self.log_odds[idx] = lo;
            let next = if lo > 0.0 {
                VoxelState::Occupied
            } else {
                VoxelState::Free
            };
            if next != self.states[idx] {
                self.states[idx] = next;
                changed.push(idx);
            }
        }
        self.touched = touched;
        changed
    }

    /// Classifies an unknown voxel by its face neighbors.
    pub fn classify_unknown(&self, idx: usize) -> Result<UnknownClass> {
        if idx >= self.len() || self.states[idx] != VoxelState::Unknown {
            return Err(Error::NotUnknown(idx));
        }
        Ok(self.classify_unchecked(idx))
    }

    #[inline]
    pub(crate) fn classify_unchecked(&self, idx: usize) -> UnknownClass {
        let mut free = false;
        let mut occupied = false;
        for n in self.grid.neighbors6(self.grid.coords(idx)) {
            match self.states[self.grid.index(n)] {
                VoxelState::Free => free = true,
                VoxelState::Occupied => occupied = true,
                VoxelState::Unknown => {}
            }
        }
        match (free, occupied) {
            (true, true) => UnknownClass::Surface,
            (true, false) => UnknownClass::Frontier,
            _ => UnknownClass::Normal,
        }
    }

    /// Every voxel swept by the box `half_extents` moving from `a` to `b` is
    /// FREE. Endpoints outside the world bounds are never traversable.
    pub fn is_segment_traversable(&self, a: &Vec3, b: &Vec3, half_extents: &Vec3) -> bool {
        if !self.interior.contains(a) || !self.interior.contains(b) {
            return false;
        }
        let swept = Aabb::new(a.inf(b) - half_extents, a.sup(b) + half_extents);
        let Some((lo, hi)) = self.grid.cell_range(&swept) else {
            return false;
        };
        let half_voxel = Vec3::repeat(self.grid.resolution * 0.5);
        // shrink by a hair so boxes that merely touch a voxel face do not count
        let inflate = half_extents + half_voxel - Vec3::repeat(1e-9);
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    let c = [x, y, z];
                    let idx = self.grid.index(c);
                    if self.states[idx] == VoxelState::Free {
                        continue;
                    }
                    // box overlaps voxel ⇔ segment pierces voxel inflated by the box
                    let center = self.grid.center(c);
                    if Aabb::from_center(&center, &inflate).segment_pierces(a, b) {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// The robot box at `center` covers only FREE voxels.
    pub fn is_box_free(&self, center: &Vec3, half_extents: &Vec3) -> bool {
        self.is_segment_traversable(center, center, half_extents)
    }

    /// Writes a text snapshot: a header line with origin, resolution and
    /// dims, then one character per voxel (`.` free, `#` occupied, `?`
    /// unknown) in x-fastest order, one z-y row per line.
    pub fn write_snapshot(&self, mut w: impl Write) -> std::io::Result<()> {
        let g = &self.grid;
        writeln!(
            w,
            "# origin {} {} {} resolution {} dims {} {} {}",
            g.origin.x, g.origin.y, g.origin.z, g.resolution, g.dims[0], g.dims[1], g.dims[2]
        )?;
        let mut line = String::with_capacity(g.dims[0]);
        for z in 0..g.dims[2] {
            for y in 0..g.dims[1] {
                line.clear();
                for x in 0..g.dims[0] {
                    line.push(match self.states[g.index([x, y, z])] {
                        VoxelState::Unknown => '?',
                        VoxelState::Free => '.',
                        VoxelState::Occupied => '#',
                    });
                }
                writeln!(w, "{line}")?;
            }
        }
        Ok(())
    }
}
