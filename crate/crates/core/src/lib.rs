//! Monte Carlo and exact tools for Rényi-2 order diagnostics of the
//! transverse-field Ising model on a torus under ZZ dephasing.

pub mod contour;
pub mod error;
pub mod estimators;
pub mod lattice;
pub mod oracle;
pub mod runner;
pub mod scaling;
pub mod sse;

pub use error::{Error, Result};
pub use contour::{ContourOptions, ContourState, Measurement, SectorRule, Topology};
pub use lattice::LatticeSpec;
pub use oracle::{DensityMatrix, Diagnostics, ModelParams};
