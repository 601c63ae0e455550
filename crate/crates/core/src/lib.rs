//! Online, bounded-memory maps of dynamics.
//!
//! Observations of motion direction and speed are hashed into sparse spatial
//! cells, subsampled with reservoir buffers, and summarized per cell by a
//! semi-wrapped Gaussian mixture over the orientation-speed cylinder. Cells are
//! bound to the navigational nodes of a layered scene graph once the pose graph
//! settles. The [`eval`] module scores fitted maps against held-out data.

// NaN-rejecting checks are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod binding;
pub mod config;
pub mod error;
pub mod eval;
pub mod histogram;
pub mod reservoir;
pub mod scene_graph;
pub mod simulator;
pub mod snapshot;
pub mod spatial_hash;
pub mod swgmm;
pub mod system;
pub mod types;

pub use error::{Error, Result};
pub use types::{CylindricalSample, Position3};
