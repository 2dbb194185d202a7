//! Hybrid acoustic radiation solver.
//!
//! Near-field interactions between boundary elements are evaluated with a
//! convolution-quadrature time-domain boundary element method (TDBEM). A
//! finite-difference time-domain (FDTD) grid carries only the far-field part
//! of the pressure of every cell, so the grid never needs ghost or solid
//! cells: every cell is an air cell and moving boundaries need no special
//! treatment.
//!
//! Module map:
//! - [`mesh`]: OBJ ingestion, remeshing, boundary elements, quadrature, binning.
//! - [`cqm`]: retarded-potential kernels and convolution-quadrature weights.
//! - [`oracle`]: dense reference TDBEM and subset contributions.
//! - [`farfield`]: the far-field FDTD grid with neighbour corrections.
//! - [`hybrid`]: the coupled solver loop.
//! - [`sources`]: Neumann data providers.
//! - [`harness`]: experiments, scene files and output writers.

pub mod cqm;
pub mod error;
pub mod farfield;
pub mod harness;
pub mod hybrid;
pub mod lattice;
pub mod mesh;
pub mod oracle;
pub mod sources;

pub use error::{Error, Result};
pub use lattice::{CellIndex, GridSpec, Vec3};

/// Default speed of sound in air, m/s.
pub const SOUND_SPEED: f64 = 343.0;
