use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Average-acceleration Newmark (`beta = 1/4`, `gamma = 1/2`).
    #[default]
    TrapezoidalNewmark,
}

/// Runtime controls for the forward solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub scheme: Scheme,
    /// Relative Picard stopping tolerance in the slab norm.
    pub picard_tol: f64,
    pub picard_max_iters: usize,
    /// Initial time-slab length in steps; halved on Picard failure.
    pub slab_steps: usize,
    /// Relative residual of every implicit CG solve.
    pub cg_tol: f64,
    /// Default regularization for callers that route through the viscous solver.
    pub viscous_eps: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::TrapezoidalNewmark,
            picard_tol: 1e-10,
            picard_max_iters: 60,
            slab_steps: 64,
            cg_tol: 1e-13,
            viscous_eps: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.picard_tol > 0.0 && self.picard_tol.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "picard_tol must be > 0, got {}",
                self.picard_tol
            )));
        }
        if self.slab_steps == 0 {
            return Err(Error::InvalidArgument("slab_steps must be >= 1".into()));
        }
        if self.picard_max_iters < 2 {
            return Err(Error::InvalidArgument(
                "picard_max_iters must be >= 2".into(),
            ));
        }
        if !(self.cg_tol > 0.0 && self.cg_tol < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "cg_tol must lie in (0, 1), got {}",
                self.cg_tol
            )));
        }
        if let Some(eps) = self.viscous_eps {
            if !(eps >= 0.0 && eps.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "viscous_eps must be >= 0, got {eps}"
                )));
            }
        }
        Ok(())
    }
}
