//! First-order linearization `u_eps = eps v + R_eps` and remainder scaling.

use rayon::prelude::*;
use serde::Serialize;

use crate::dnmap::ExteriorInput;
use crate::error::{Error, Result};
use crate::forward::{solve_with_exterior, NonlinearitySpec, SolverConfig};
use crate::lattice::{spacetime_l2, sup_hs, Grid, RegionMask, ScalarField, SpaceTimeField};

/// Least-squares line through `(x, y)`: slope, intercept and the largest
/// absolute deviation.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let dev = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).abs())
        .fold(0.0, f64::max);
    (slope, intercept, dev)
}

pub(crate) fn check_epsilons(epsilons: &[f64]) -> Result<()> {
    if epsilons.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "slope fit needs at least 3 amplitudes, got {}",
            epsilons.len()
        )));
    }
    if epsilons.iter().any(|&e| !(e > 0.0 && e.is_finite())) || epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("amplitudes must be positive and strictly decreasing".into()));
    }
    Ok(())
}

/// Remainders below this fraction of `eps ||v||` are indistinguishable from zero.
const ROUNDOFF: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RemainderNorm {
    pub epsilon: f64,
    /// `sup_t ||R_eps(t)||_{H^s}`.
    pub sup_hs: f64,
    /// `||R_eps||_{L^2(Omega_T)}`.
    pub l2: f64,
}

#[derive(Debug, Clone)]
pub struct ProbeResult {
    pub epsilons: Vec<f64>,
    pub remainder_norms: Vec<RemainderNorm>,
    /// Slope of `log ||R_eps||_{L^2}` against `log eps`; `None` when some
    /// remainder is at round-off level relative to `eps ||v||`.
    pub fitted_slope: Option<f64>,
    /// Largest deviation from the fitted line, in log units.
    pub fit_residual: f64,
    /// Linear solution `v` driven by `phi_base` with zero initial data.
    pub v_ref: SpaceTimeField,
}

/// Solves the nonlinear problem with exterior data `eps phi_base` for every
/// amplitude and the linear problem once, and fits the remainder decay.
pub fn linearization_probe(
    grid: &Grid,
    mask: &RegionMask,
    spec: &NonlinearitySpec,
    phi_base: &ExteriorInput,
    epsilons: &[f64],
    cfg: &SolverConfig,
) -> Result<ProbeResult> {
    check_epsilons(epsilons)?;
    for &idx in mask.omega_nodes() {
        if spec.value(idx, 0.0)? != 0.0 {
            return Err(Error::InvalidArgument("probe needs f(x, 0) = 0".into()));
        }
    }
    let zero = ScalarField::zeros(grid);
    let h = SpaceTimeField::zeros(grid);
    let phi = phi_base.data();
    let v = solve_with_exterior(grid, mask, &NonlinearitySpec::zero(), &h, &zero, &zero, &phi, cfg)?.u;
    let v_int = v.restricted(mask.omega());
    let solutions: Vec<SpaceTimeField> = epsilons
        .par_iter()
        .map(|&eps| solve_with_exterior(grid, mask, spec, &h, &zero, &zero, &phi.scaled(eps), cfg).map(|t| t.u))
        .collect::<Result<_>>()?;
    let remainder_norms: Vec<RemainderNorm> = epsilons
        .iter()
        .zip(&solutions)
        .map(|(&eps, u)| {
            let r = u.restricted(mask.omega()).sub(&v_int.scaled(eps));
            RemainderNorm {
                epsilon: eps,
                sup_hs: sup_hs(grid, &r),
                l2: spacetime_l2(grid, &r, mask.omega_region()),
            }
        })
        .collect();
    let v_norm = spacetime_l2(grid, &v_int, mask.omega_region());
    let resolved = remainder_norms.iter().all(|n| n.l2 > ROUNDOFF * n.epsilon * v_norm);
    let (fitted_slope, fit_residual) = if resolved {
        let lx: Vec<f64> = epsilons.iter().map(|e| e.ln()).collect();
        let ly: Vec<f64> = remainder_norms.iter().map(|n| n.l2.ln()).collect();
        let (slope, _, dev) = fit_line(&lx, &ly);
        (Some(slope), dev)
    } else {
        (None, 0.0)
    };
    Ok(ProbeResult {
        epsilons: epsilons.to_vec(),
        remainder_norms,
        fitted_slope,
        fit_residual,
        v_ref: v,
    })
}
