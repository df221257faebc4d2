//! Oracles that produce synthetic data on a lattice other than the one used
//! for inversion, so reconstructions are not tested against their own
//! discretization.

use fracwave::dnmap::{DnOracle, DnRecord, ExteriorInput, SyntheticOracle};
use fracwave::lattice::{Grid, RegionMask, ScalarField, SpaceTimeField};

/// Measures on a coarse lattice and reports traces on the fine one.
///
/// Inputs move fine to coarse inside `w1` and traces coarse to fine inside
/// `w2` by [`window_interpolate`]. Both lattices share the box and the time grid.
pub struct HalfResolutionOracle {
    fine: Grid,
    fine_mask: RegionMask,
    coarse: SyntheticOracle,
}

impl HalfResolutionOracle {
    pub fn new(fine: Grid, fine_mask: RegionMask, coarse: SyntheticOracle) -> fracwave::Result<Self> {
        let c = coarse.grid();
        if c.box_length() != fine.box_length() || c.dim() != fine.dim() || c.dt() != fine.dt() || c.steps() != fine.steps()
        {
            return Err(fracwave::Error::InvalidArgument(
                "coarse oracle must share box, dimension and time grid with the fine lattice".into(),
            ));
        }
        Ok(Self {
            fine,
            fine_mask,
            coarse,
        })
    }

    fn transfer(
        target: &Grid,
        source: &Grid,
        field: &SpaceTimeField,
        source_keep: &[bool],
        target_keep: &[bool],
    ) -> fracwave::Result<SpaceTimeField> {
        let frames = field
            .frames()
            .iter()
            .map(|f| ScalarField::from_values(target, window_interpolate(target, source, f.values(), source_keep, target_keep)))
            .collect::<fracwave::Result<Vec<_>>>()?;
        SpaceTimeField::from_frames(target, frames)
    }
}

/// Multilinear interpolation of `values` (living on `source_keep`) at the
/// `target_keep` nodes of `target`. Corners outside `source_keep` are dropped
/// and the remaining weights renormalized, so data cut to a window is never
/// mixed with the zeros outside it; nodes with no usable corner get 0.
pub fn window_interpolate(
    target: &Grid,
    source: &Grid,
    values: &[f64],
    source_keep: &[bool],
    target_keep: &[bool],
) -> Vec<f64> {
    let n = source.points();
    let h = source.spacing();
    let half = 0.5 * source.box_length();
    let dim = target.dim();
    let locate = |x: f64| {
        let t = (x + half) / h;
        let j = t.floor();
        ((j as i64).rem_euclid(n as i64) as usize, t - j)
    };
    (0..target.len())
        .map(|i| {
            if !target_keep[i] {
                return 0.0;
            }
            let x = target.node_coordinates(i);
            let axes: Vec<(usize, f64)> = (0..dim).map(|a| locate(x[a])).collect();
            let (mut sum, mut weight) = (0.0, 0.0);
            for corner in 0..(1usize << dim) {
                let mut idx = 0;
                let mut w = 1.0;
                for (a, &(j, frac)) in axes.iter().enumerate() {
                    let up = (corner >> a) & 1 == 1;
                    let ja = if up { (j + 1) % n } else { j };
                    w *= if up { frac } else { 1.0 - frac };
                    idx = idx * n + ja;
                }
                if w > 0.0 && source_keep[idx] {
                    sum += w * values[idx];
                    weight += w;
                }
            }
            if weight > 0.0 {
                sum / weight
            } else {
                0.0
            }
        })
        .collect()
}

impl DnOracle for HalfResolutionOracle {
    fn grid(&self) -> &Grid {
        &self.fine
    }

    fn mask(&self) -> &RegionMask {
        &self.fine_mask
    }

    fn measure(&self, input: &ExteriorInput) -> fracwave::Result<DnRecord> {
        let coarse_grid = self.coarse.grid();
        let coarse_mask = self.coarse.mask();
        let phi = Self::transfer(coarse_grid, &self.fine, input.phi(), self.fine_mask.w1(), coarse_mask.w1())?;
        let coarse_input = ExteriorInput::new(coarse_grid, coarse_mask, phi, input.amplitude(), input.label())?;
        let record = self.coarse.measure(&coarse_input)?;
        let trace = Self::transfer(&self.fine, coarse_grid, &record.trace, coarse_mask.w2(), self.fine_mask.w2())?;
        Ok(DnRecord {
            input: input.clone(),
            trace,
            pairing_cache: None,
            provenance: format!("{} (half resolution)", record.provenance),
            mask_hash: self.fine_mask.hash(),
        })
    }
}
