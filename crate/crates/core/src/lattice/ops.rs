//! Masked stiffness operator and the discrete norms every other module uses.

use super::field::{ScalarField, SpaceTimeField};
use super::grid::Grid;
use super::mask::{Region, RegionMask};
use crate::error::{check_finite, check_len, Error, Result};

/// `P_Omega (-Delta)^s P_Omega u`. Entries of `u` off the interior are ignored.
pub fn masked_stiffness(grid: &Grid, u: &ScalarField, mask: &RegionMask) -> Result<ScalarField> {
    if mask.omega_nodes().is_empty() {
        return Err(Error::InvalidMask("omega is empty".into()));
    }
    check_len(u.len(), grid.len(), "masked_stiffness input")?;
    check_finite(u.values(), "masked_stiffness input")?;
    let mut out = vec![0.0; grid.len()];
    stiffness_into(grid, mask, u.values(), &mut out);
    Ok(ScalarField::from_vec_unchecked(out))
}

pub(crate) fn stiffness_into(grid: &Grid, mask: &RegionMask, u: &[f64], out: &mut [f64]) {
    let projected: Vec<f64> = u
        .iter()
        .zip(mask.omega())
        .map(|(&v, &keep)| if keep { v } else { 0.0 })
        .collect();
    grid.frac_into(&projected, grid.order(), out);
    mask.project_omega_in_place(out);
}

/// Cell-volume-weighted Euclidean norm over a region.
pub fn l2_norm(grid: &Grid, u: &ScalarField, region: Region<'_>) -> f64 {
    region_sq(grid, u.values(), region).sqrt()
}

pub(crate) fn region_sq(grid: &Grid, u: &[f64], region: Region<'_>) -> f64 {
    let sum: f64 = match region {
        Region::All => u.iter().map(|v| v * v).sum(),
        Region::Nodes(ind) => u
            .iter()
            .zip(ind)
            .filter(|(_, &keep)| keep)
            .map(|(v, _)| v * v)
            .sum(),
    };
    sum * grid.cell_volume()
}

/// Weighted inner product over a region.
pub fn inner(grid: &Grid, a: &ScalarField, b: &ScalarField, region: Region<'_>) -> f64 {
    inner_raw(grid, a.values(), b.values(), region)
}

pub(crate) fn inner_raw(grid: &Grid, a: &[f64], b: &[f64], region: Region<'_>) -> f64 {
    let sum: f64 = match region {
        Region::All => a.iter().zip(b).map(|(x, y)| x * y).sum(),
        Region::Nodes(ind) => a
            .iter()
            .zip(b)
            .zip(ind)
            .filter(|(_, &keep)| keep)
            .map(|((x, y), _)| x * y)
            .sum(),
    };
    sum * grid.cell_volume()
}

/// `||(-Delta)^{s/2} u||_{L^2}` over the whole torus.
pub fn hs_tilde_norm(grid: &Grid, u: &ScalarField) -> f64 {
    hs_sq(grid, u.values()).sqrt()
}

pub(crate) fn hs_sq(grid: &Grid, u: &[f64]) -> f64 {
    let half = grid.frac_vec(u, grid.order() / 2.0);
    region_sq(grid, &half, Region::All)
}

/// Trapezoid weights of the time levels `0..=steps`.
pub fn time_weights(grid: &Grid) -> Vec<f64> {
    let dt = grid.dt();
    (0..grid.levels())
        .map(|n| {
            if n == 0 || n == grid.steps() {
                0.5 * dt
            } else {
                dt
            }
        })
        .collect()
}

/// `L^2` norm over `region x (0, T)`, trapezoid in time.
pub fn spacetime_l2(grid: &Grid, u: &SpaceTimeField, region: Region<'_>) -> f64 {
    spacetime_inner(grid, u, u, region).sqrt()
}

pub fn spacetime_inner(
    grid: &Grid,
    a: &SpaceTimeField,
    b: &SpaceTimeField,
    region: Region<'_>,
) -> f64 {
    time_weights(grid)
        .iter()
        .zip(a.frames().iter().zip(b.frames()))
        .map(|(w, (fa, fb))| w * inner(grid, fa, fb, region))
        .sum()
}

/// Discrete `sup_t` of the `L^2(region)` norm.
pub fn sup_l2(grid: &Grid, u: &SpaceTimeField, region: Region<'_>) -> f64 {
    u.frames()
        .iter()
        .map(|f| l2_norm(grid, f, region))
        .fold(0.0, f64::max)
}

/// Discrete `sup_t` of the `H^s`-tilde seminorm.
pub fn sup_hs(grid: &Grid, u: &SpaceTimeField) -> f64 {
    u.frames()
        .iter()
        .map(|f| hs_tilde_norm(grid, f))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{AxisBox, GridParams};

    fn setup() -> (Grid, RegionMask) {
        let g = Grid::new(GridParams {
            dim: 1,
            points: 64,
            box_length: 4.0,
            order: 0.6,
            dt: 0.01,
            steps: 4,
        })
        .unwrap();
        let m = RegionMask::from_boxes(
            &g,
            &[AxisBox::interval(-0.5, 0.5)],
            &[AxisBox::interval(-1.25, -0.6)],
            &[AxisBox::interval(0.6, 1.25)],
        )
        .unwrap();
        (g, m)
    }

    #[test]
    fn stiffness_of_zero_is_zero() {
        let (g, m) = setup();
        let out = masked_stiffness(&g, &ScalarField::zeros(&g), &m).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stiffness_rejects_nan() {
        let (g, m) = setup();
        let mut u = ScalarField::zeros(&g);
        u.values_mut()[3] = f64::NAN;
        assert!(matches!(
            masked_stiffness(&g, &u, &m),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn stiffness_output_supported_on_omega() {
        let (g, m) = setup();
        let u = ScalarField::constant(&g, 1.0);
        let out = masked_stiffness(&g, &u, &m).unwrap();
        for (i, &v) in out.values().iter().enumerate() {
            if !m.omega()[i] {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn trapezoid_weights_sum_to_horizon() {
        let (g, _) = setup();
        let total: f64 = time_weights(&g).iter().sum();
        assert!((total - g.final_time()).abs() < 1e-15);
    }
}
