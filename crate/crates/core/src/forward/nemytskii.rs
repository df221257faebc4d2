//! Superposition operator `u(x, t) -> f(x, u(x, t))` and an empirical modulus of
//! continuity from `L^2` into `L^{2/(r+1)}` on the interior cylinder.

use serde::{Deserialize, Serialize};

use super::nonlinearity::NonlinearitySpec;
use super::solve::check_spacetime;
use crate::error::{Error, Result};
use crate::lattice::{spacetime_l2, time_weights, Grid, RegionMask, ScalarField, SpaceTimeField};

/// Pointwise `f(x, u(x, t))` at every node and level.
pub fn apply_nemytskii(spec: &NonlinearitySpec, u: &SpaceTimeField) -> Result<SpaceTimeField> {
    let frames = u
        .frames()
        .iter()
        .map(|frame| {
            let values = frame
                .values()
                .iter()
                .enumerate()
                .map(|(i, &tau)| spec.value(i, tau))
                .collect::<Result<Vec<f64>>>()?;
            Ok(ScalarField::from_vec_unchecked(values))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpaceTimeField::from_frames_unchecked(frames))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulusRow {
    pub delta: f64,
    /// Largest `||f(u + delta eta) - f(u)||_{L^{2/(r+1)}}` over the directions.
    pub value: f64,
}

/// `(sum_t w_t sum_{x in Omega} h^n |g|^p)^{1/p}`.
fn lebesgue_norm(grid: &Grid, mask: &RegionMask, g: &SpaceTimeField, p: f64) -> f64 {
    let cell = grid.cell_volume();
    let sum: f64 = time_weights(grid)
        .iter()
        .zip(g.frames())
        .map(|(w, frame)| {
            let v = frame.values();
            w * cell
                * mask
                    .omega_nodes()
                    .iter()
                    .map(|&i| v[i].abs().powf(p))
                    .sum::<f64>()
        })
        .sum();
    sum.powf(1.0 / p)
}

/// Modulus table over `deltas` for the given perturbation directions, each
/// rescaled to unit `L^2(Omega x (0, T))` norm. Requires `r <= 1`.
pub fn nemytskii_modulus(
    spec: &NonlinearitySpec,
    grid: &Grid,
    mask: &RegionMask,
    u: &SpaceTimeField,
    deltas: &[f64],
    directions: &[SpaceTimeField],
) -> Result<Vec<ModulusRow>> {
    let alpha = spec.r() + 1.0;
    if alpha > 2.0 {
        return Err(Error::InvalidArgument(format!(
            "growth exponent r + 1 = {alpha} exceeds 2; no L^2 -> L^(2/(r+1)) instance"
        )));
    }
    if directions.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one direction is required".into(),
        ));
    }
    check_spacetime(grid, u, "modulus base field")?;
    let p = 2.0 / alpha;
    let base = apply_nemytskii(spec, u)?;
    let units = directions
        .iter()
        .map(|eta| {
            check_spacetime(grid, eta, "modulus direction")?;
            let restricted = eta.restricted(mask.omega());
            let norm = spacetime_l2(grid, &restricted, mask.omega_region());
            if norm == 0.0 {
                return Err(Error::InvalidArgument(
                    "direction vanishes on the interior".into(),
                ));
            }
            Ok(restricted.scaled(1.0 / norm))
        })
        .collect::<Result<Vec<_>>>()?;
    deltas
        .iter()
        .map(|&delta| {
            let value = units
                .iter()
                .map(|eta| {
                    let mut shifted = u.clone();
                    shifted.axpy(delta, eta);
                    let moved = apply_nemytskii(spec, &shifted)?;
                    Ok(lebesgue_norm(grid, mask, &moved.sub(&base), p))
                })
                .collect::<Result<Vec<f64>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            Ok(ModulusRow { delta, value })
        })
        .collect()
}
