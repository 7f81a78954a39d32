//! Incremental roadmap exploration planner for a depth-camera robot in
//! unknown voxel worlds with walking people.
//!
//! The pipeline per planning iteration is: grow the roadmap around the
//! robot and across mapped free space ([`roadmap`]), evaluate or refresh node
//! gains ([`gain`]), pick the trajectory with the best gain per second
//! ([`planner`]), then nudge its waypoints away from obstacles and toward a
//! faster path ([`optimizer`]). [`grid_world`] is the ground-truth simulator
//! and [`harness`] ties everything into full exploration runs.

pub mod config;
pub mod error;
pub mod esdf;
pub mod gain;
pub mod geometry;
pub mod grid_world;
pub mod harness;
pub mod occupancy;
pub mod optimizer;
pub mod planner;
pub mod raycast;
pub mod roadmap;

pub use config::Config;
pub use error::{Error, Result};
pub use geometry::Vec3;
pub use grid_world::{Pose, Scenario};
pub use occupancy::{OccupancyMap, UnknownClass, VoxelState};
