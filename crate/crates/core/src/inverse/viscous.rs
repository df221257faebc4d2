//! Integration-by-parts check for the viscous regularization pair
//! `v'' + eps K v' + K v = -(-Delta)^s phi` (zero initial data) and
//! `w'' - eps K w' + K w = F` (zero terminal data).

use serde::Serialize;

use crate::dnmap::ExteriorInput;
use crate::error::Result;
use crate::forward::{check_spacetime, solve_viscous, SolverConfig, Trajectory};
use crate::lattice::{inner_raw, sup_l2, time_weights, Grid, RegionMask, ScalarField, SpaceTimeField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IbpCheck {
    pub eps: f64,
    /// `int <v'', w> dt`.
    pub forward_pairing: f64,
    /// `int <w'', v> dt`.
    pub adjoint_pairing: f64,
    pub mismatch: f64,
    /// Mismatch over the larger pairing magnitude.
    pub relative: f64,
}

/// Second time derivative from the velocity frames: central differences
/// inside, second-order one-sided at both ends.
fn acceleration(grid: &Grid, traj: &Trajectory) -> Vec<Vec<f64>> {
    let v: Vec<&[f64]> = traj.ut.frames().iter().map(|f| f.values()).collect();
    let dt = grid.dt();
    let last = v.len() - 1;
    (0..=last)
        .map(|n| {
            let (a, b, c, w) = if n == 0 {
                (v[0], v[1], v[2], [-3.0, 4.0, -1.0])
            } else if n == last {
                (v[last - 2], v[last - 1], v[last], [1.0, -4.0, 3.0])
            } else {
                (v[n - 1], v[n], v[n + 1], [-1.0, 0.0, 1.0])
            };
            (0..a.len())
                .map(|i| (w[0] * a[i] + w[1] * b[i] + w[2] * c[i]) / (2.0 * dt))
                .collect()
        })
        .collect()
}

fn pairing(grid: &Grid, mask: &RegionMask, acc: &[Vec<f64>], other: &SpaceTimeField) -> f64 {
    time_weights(grid)
        .iter()
        .zip(acc)
        .zip(other.frames())
        .map(|((w, a), b)| w * inner_raw(grid, a, b.values(), mask.omega_region()))
        .sum()
}

fn lifting_source(grid: &Grid, mask: &RegionMask, phi: &ExteriorInput) -> SpaceTimeField {
    SpaceTimeField::from_frames_unchecked(
        phi.data()
            .frames()
            .iter()
            .map(|f| {
                let mut l = grid.frac_vec(f.values(), grid.order());
                l.iter_mut().for_each(|x| *x = -*x);
                ScalarField::from_vec_unchecked(l).restricted(mask.omega())
            })
            .collect(),
    )
}

/// `sup_t ||v^eps - v^0||_{L2(omega)}` for the forward regularized problem.
pub fn regularization_gap(
    grid: &Grid,
    mask: &RegionMask,
    q: &ScalarField,
    phi: &ExteriorInput,
    eps: f64,
    cfg: &SolverConfig,
) -> Result<f64> {
    let lifting = lifting_source(grid, mask, phi);
    let zero = ScalarField::zeros(grid);
    let v = solve_viscous(grid, mask, q, &lifting, &zero, &zero, eps, cfg, false)?;
    let v0 = solve_viscous(grid, mask, q, &lifting, &zero, &zero, 0.0, cfg, false)?;
    Ok(sup_l2(grid, &v.u.sub(&v0.u), mask.omega_region()))
}

/// Solves both regularized problems at `eps` and compares the two sides of
/// the time integration-by-parts identity.
pub fn integration_by_parts_mismatch(
    grid: &Grid,
    mask: &RegionMask,
    q: &ScalarField,
    phi: &ExteriorInput,
    source: &SpaceTimeField,
    eps: f64,
    cfg: &SolverConfig,
) -> Result<IbpCheck> {
    check_spacetime(grid, source, "adjoint source")?;
    let lifting = lifting_source(grid, mask, phi);
    let zero = ScalarField::zeros(grid);
    let v = solve_viscous(grid, mask, q, &lifting, &zero, &zero, eps, cfg, false)?;
    let w = solve_viscous(grid, mask, q, &source.restricted(mask.omega()), &zero, &zero, eps, cfg, true)?;
    let forward_pairing = pairing(grid, mask, &acceleration(grid, &v), &w.u);
    let adjoint_pairing = pairing(grid, mask, &acceleration(grid, &w), &v.u);
    let mismatch = (forward_pairing - adjoint_pairing).abs();
    let scale = forward_pairing.abs().max(adjoint_pairing.abs());
    Ok(IbpCheck {
        eps,
        forward_pairing,
        adjoint_pairing,
        mismatch,
        relative: if scale > 0.0 { mismatch / scale } else { 0.0 },
    })
}
