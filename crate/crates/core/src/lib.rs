//! GEIM reduced bases, greedy sensor placement and constrained stabilized
//! reconstruction (CS-GEIM) for parametric fields, with a two-group
//! diffusion solver for the IAEA 2D benchmark as the snapshot generator.

pub mod analytic;
pub mod csgeim;
pub mod archive;
pub mod diffusion;
pub mod error;
pub mod experiments;
pub mod geim;
pub mod mesh;
pub mod sparse;

pub use diffusion::{Component, DiffusionProblem, SetRole, Snapshot, SnapshotSet};
pub use error::{Error, Result};
pub use mesh::{Domain, Field2D, Grid2D, NormKind, RegionMap, SensorRegion, Symmetry};
