//! Spectral simulation of semilinear fractional wave equations with exterior
//! Dirichlet data, synthesis of the exterior Dirichlet-to-Neumann map, and
//! adjoint-based reconstruction of nonlinearities, potentials and initial data.

pub mod dnmap;
pub mod error;
pub mod forward;
pub mod inverse;
pub mod lattice;

pub use error::{Error, Result};
