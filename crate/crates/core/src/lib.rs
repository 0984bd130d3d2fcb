//! Random walks on growing graphs: exact and Monte Carlo evolution, evolving
//! sets, isoperimetric profiles, heat-kernel bounds and a merging laboratory.

pub mod bounds;
pub mod error;
pub mod evoset;
pub mod families;
pub mod graph;
pub mod isoperimetry;
pub mod merging;
pub mod rng;
pub mod scalar;
pub mod sequence;
pub mod stats;
pub mod walk;

pub use error::{Error, Result};
pub use graph::{GraphSnapshot, SnapshotBuilder, VertexId};
pub use isoperimetry::IsoperimetricProfile;
pub use sequence::GraphSequence;
