//! Forward solvers for `u'' + (-Delta)^s u + f(x, u) + g(x, u_t) = h` on the
//! interior with prescribed exterior values, built on one implicit Newmark core.

mod config;
mod energy;
pub mod io;
mod nemytskii;
pub(crate) mod newmark;
mod nonlinearity;
mod solve;

pub use config::{Scheme, SolverConfig};
pub use energy::{max_step_residual, EnergyRecord};
pub use nemytskii::{apply_nemytskii, nemytskii_modulus, ModulusRow};
pub use nonlinearity::{
    validate_assumption, ConditionCheck, Damping, NonlinearityKind, NonlinearitySpec, Tabulated,
    ValidationReport,
};
pub use solve::{
    solve_linear, solve_nonlinear, solve_nonlinear_forced, solve_viscous, solve_with_exterior,
    SlabRecord, Trajectory, CONTRACTION_BOUND,
};

pub(crate) use solve::{check_field, check_spacetime};

#[cfg(test)]
mod tests;
