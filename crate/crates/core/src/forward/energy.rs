//! Per-step energy bookkeeping. With `E = ||u_t||^2 + ||u||_{H^s}^2 + P(u)` the
//! logged residual is `E_n - E_0 - W_n + D_n`, where `W` accumulates the work of
//! the external source and `D` the dissipated energy.

use serde::{Deserialize, Serialize};

use super::newmark::State;
use crate::error::Result;
use crate::lattice::{hs_sq, inner_raw, region_sq, Grid, RegionMask};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyRecord {
    pub level: usize,
    pub time: f64,
    /// `||u_t||^2` over the interior.
    pub kinetic: f64,
    /// `||(-Delta)^{s/2} u||^2`.
    pub elastic: f64,
    /// `<q u, u>` for linear potentials, `2 int F(x, u)` for nonlinear ones.
    pub potential: f64,
    /// Cumulative source work.
    pub work: f64,
    /// Cumulative dissipation by damping or viscosity.
    pub dissipation: f64,
    pub residual: f64,
}

impl EnergyRecord {
    pub fn total(&self) -> f64 {
        self.kinetic + self.elastic + self.potential
    }
}

/// Largest per-step change of the residual, relative to the largest energy scale
/// seen along the log.
pub fn max_step_residual(log: &[EnergyRecord]) -> f64 {
    let scale = log
        .iter()
        .map(|r| r.kinetic + r.elastic + r.potential.abs() + r.work.abs() + r.dissipation.abs())
        .fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    log.windows(2)
        .map(|w| (w[1].residual - w[0].residual).abs() / scale)
        .fold(0.0, f64::max)
}

/// Builds the log. `potential(level, u)` is the potential term, `work_loads`
/// the source whose work is tracked and `dissipation(n)` the energy removed on
/// the step `n -> n + 1`.
pub(crate) fn energy_log(
    grid: &Grid,
    mask: &RegionMask,
    states: &[State],
    potential: impl Fn(usize, &[f64]) -> Result<f64>,
    work_loads: &[Vec<f64>],
    dissipation: impl Fn(usize) -> Result<f64>,
) -> Result<Vec<EnergyRecord>> {
    let omega = mask.omega_region();
    let mut log = Vec::with_capacity(states.len());
    let mut work = 0.0;
    let mut dissipated = 0.0;
    let mut e0 = 0.0;
    for (n, s) in states.iter().enumerate() {
        if n > 0 {
            let du: Vec<f64> =
                s.u.iter()
                    .zip(&states[n - 1].u)
                    .map(|(a, b)| a - b)
                    .collect();
            let load: Vec<f64> = work_loads[n]
                .iter()
                .zip(&work_loads[n - 1])
                .map(|(a, b)| a + b)
                .collect();
            work += inner_raw(grid, &load, &du, omega);
            dissipated += dissipation(n - 1)?;
        }
        let kinetic = region_sq(grid, &s.v, omega);
        let elastic = hs_sq(grid, &s.u);
        let pot = potential(n, &s.u)?;
        let total = kinetic + elastic + pot;
        if n == 0 {
            e0 = total;
        }
        log.push(EnergyRecord {
            level: n,
            time: grid.time(n),
            kinetic,
            elastic,
            potential: pot,
            work,
            dissipation: dissipated,
            residual: total - e0 - work + dissipated,
        });
    }
    Ok(log)
}
