//! Numerical atlas of conjugate points and caustic singularities for
//! Hamiltonian boundary value problems.

pub mod boundary;
pub mod error;
pub mod linalg;
pub mod locus;
pub mod flow;
pub mod phase;
pub mod shooting;
pub mod singularity;
pub mod symmetry;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use phase::{HamiltonianModel, PhasePoint};
