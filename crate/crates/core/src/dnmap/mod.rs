//! Exterior Dirichlet-to-Neumann measurements: `phi -> (-Delta)^s u_phi` on the
//! observation window, with the bilinear pairing form as a cross-check.

pub mod io;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward::{check_field, check_spacetime, solve_with_exterior, NonlinearitySpec, SolverConfig};
use crate::lattice::{time_weights, Grid, RegionMask, ScalarField, SpaceTimeField};

/// Exterior data `amplitude * phi` with `phi` supported on the control window.
#[derive(Debug, Clone, PartialEq)]
pub struct ExteriorInput {
    phi: SpaceTimeField,
    amplitude: f64,
    label: String,
}

impl ExteriorInput {
    /// Takes `phi` as given; every frame must vanish off `w1` exactly.
    pub fn new(grid: &Grid, mask: &RegionMask, phi: SpaceTimeField, amplitude: f64, label: impl Into<String>) -> Result<Self> {
        mask.require_windows()?;
        check_spacetime(grid, &phi, "exterior input")?;
        if !amplitude.is_finite() {
            return Err(Error::InvalidArgument(format!("amplitude must be finite, got {amplitude}")));
        }
        for (k, frame) in phi.frames().iter().enumerate() {
            if let Some(i) = (0..grid.len()).find(|&i| !mask.w1()[i] && frame.values()[i] != 0.0) {
                return Err(Error::Support(format!("exterior input nonzero off w1 at level {k}, node {i}")));
            }
        }
        Ok(Self {
            phi,
            amplitude,
            label: label.into(),
        })
    }

    /// Applies the smoothing `P_w1 lowpass P_w1` framewise before the support check.
    pub fn smoothed(
        grid: &Grid,
        mask: &RegionMask,
        raw: &SpaceTimeField,
        amplitude: f64,
        label: impl Into<String>,
    ) -> Result<Self> {
        mask.require_windows()?;
        check_spacetime(grid, raw, "exterior input")?;
        let frames = raw.frames().iter().map(|f| smooth_on_w1(grid, mask, f)).collect();
        Self::new(grid, mask, SpaceTimeField::from_frames(grid, frames)?, amplitude, label)
    }

    /// The passive input `phi = 0`.
    pub fn passive(grid: &Grid, label: impl Into<String>) -> Self {
        Self {
            phi: SpaceTimeField::zeros(grid),
            amplitude: 1.0,
            label: label.into(),
        }
    }

    pub fn phi(&self) -> &SpaceTimeField {
        &self.phi
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// The exterior data actually imposed, `amplitude * phi`.
    pub fn data(&self) -> SpaceTimeField {
        self.phi.scaled(self.amplitude)
    }

    /// Same shape with amplitude multiplied by `factor`.
    pub fn rescaled(&self, factor: f64, label: impl Into<String>) -> Self {
        Self {
            phi: self.phi.clone(),
            amplitude: self.amplitude * factor,
            label: label.into(),
        }
    }
}

/// `P_w1 lowpass P_w1 f`; symmetric in the Euclidean pairing.
pub fn smooth_on_w1(grid: &Grid, mask: &RegionMask, f: &ScalarField) -> ScalarField {
    let inside = f.restricted(mask.w1());
    let low = grid.lowpass(inside.values());
    ScalarField::from_vec_unchecked(low).restricted(mask.w1())
}

/// Pairing values against a stored test-function basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PairingCache {
    pub basis: Vec<SpaceTimeField>,
    pub values: Vec<f64>,
}

/// One DN measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct DnRecord {
    pub input: ExteriorInput,
    /// `(-Delta)^s u` on `w2` nodes, zero elsewhere.
    pub trace: SpaceTimeField,
    pub pairing_cache: Option<PairingCache>,
    pub provenance: String,
    pub mask_hash: String,
}

impl DnRecord {
    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    /// `<trace, psi>` over `w2 x (0, T)`; `psi` must be supported on `w2`.
    pub fn pair_with(&self, grid: &Grid, mask: &RegionMask, psi: &SpaceTimeField) -> Result<f64> {
        check_spacetime(grid, psi, "test function")?;
        if mask.hash() != self.mask_hash {
            return Err(Error::InvalidMask("record was measured on a different mask".into()));
        }
        for frame in psi.frames() {
            if (0..grid.len()).any(|i| !mask.w2()[i] && frame.values()[i] != 0.0) {
                return Err(Error::Support("test function must be supported on w2".into()));
            }
        }
        Ok(trapezoid_pairing(grid, &self.trace, psi))
    }

    /// Largest relative disagreement between the cached pairings and the
    /// trace-based ones.
    pub fn pairing_mismatch(&self, grid: &Grid, mask: &RegionMask) -> Result<f64> {
        let Some(cache) = &self.pairing_cache else {
            return Ok(0.0);
        };
        let scale = cache.values.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let mut worst: f64 = 0.0;
        for (psi, &cached) in cache.basis.iter().zip(&cache.values) {
            let direct = self.pair_with(grid, mask, psi)?;
            let gap = (direct - cached).abs();
            if gap > 0.0 {
                worst = worst.max(gap / scale.max(f64::MIN_POSITIVE));
            }
        }
        Ok(worst)
    }
}

fn trapezoid_pairing(grid: &Grid, a: &SpaceTimeField, b: &SpaceTimeField) -> f64 {
    let cell = grid.cell_volume();
    time_weights(grid)
        .iter()
        .zip(a.frames().iter().zip(b.frames()))
        .map(|(w, (fa, fb))| w * cell * fa.dot(fb))
        .sum()
}

/// `sum_n w_n <(-Delta)^{s/2} u_n, (-Delta)^{s/2} psi_n>` over the whole lattice.
pub fn bilinear_pairing(grid: &Grid, u: &SpaceTimeField, psi: &SpaceTimeField) -> f64 {
    let half = grid.order() / 2.0;
    let cell = grid.cell_volume();
    time_weights(grid)
        .iter()
        .zip(u.frames().iter().zip(psi.frames()))
        .map(|(w, (fu, fp))| {
            let a = grid.frac_vec(fu.values(), half);
            let b = grid.frac_vec(fp.values(), half);
            w * cell * a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>()
        })
        .sum()
}

/// Runs the exterior problem with zero interior source and records the trace.
#[allow(clippy::too_many_arguments)]
pub fn measure(
    grid: &Grid,
    mask: &RegionMask,
    spec: &NonlinearitySpec,
    u0: &ScalarField,
    u1: &ScalarField,
    input: &ExteriorInput,
    cfg: &SolverConfig,
) -> Result<DnRecord> {
    measure_with_pairings(grid, mask, spec, u0, u1, input, &[], cfg)
}

/// As [`measure`], additionally caching `<Lambda phi, psi>` by the split form
/// for every `psi` in `basis`.
#[allow(clippy::too_many_arguments)]
pub fn measure_with_pairings(
    grid: &Grid,
    mask: &RegionMask,
    spec: &NonlinearitySpec,
    u0: &ScalarField,
    u1: &ScalarField,
    input: &ExteriorInput,
    basis: &[SpaceTimeField],
    cfg: &SolverConfig,
) -> Result<DnRecord> {
    let wrap = |source: Error| Error::Measurement {
        label: input.label().to_string(),
        source: Box::new(source),
    };
    mask.require_windows().map_err(wrap)?;
    check_field(grid, u0, "initial displacement").map_err(wrap)?;
    check_field(grid, u1, "initial velocity").map_err(wrap)?;
    for psi in basis {
        check_spacetime(grid, psi, "pairing basis").map_err(wrap)?;
    }
    let h = SpaceTimeField::zeros(grid);
    let traj = solve_with_exterior(grid, mask, spec, &h, u0, u1, &input.data(), cfg).map_err(wrap)?;
    let trace = observe(grid, mask, &traj.u);
    let pairing_cache = (!basis.is_empty()).then(|| PairingCache {
        basis: basis.to_vec(),
        values: basis.iter().map(|psi| bilinear_pairing(grid, &traj.u, psi)).collect(),
    });
    Ok(DnRecord {
        input: input.clone(),
        trace,
        pairing_cache,
        provenance: String::new(),
        mask_hash: mask.hash(),
    })
}

/// `P_w2 (-Delta)^s u_n` for every frame.
pub(crate) fn observe(grid: &Grid, mask: &RegionMask, u: &SpaceTimeField) -> SpaceTimeField {
    let frames = u
        .frames()
        .iter()
        .map(|f| ScalarField::from_vec_unchecked(grid.frac_vec(f.values(), grid.order())).restricted(mask.w2()))
        .collect();
    SpaceTimeField::from_frames_unchecked(frames)
}

/// Column-per-input records, computed in parallel and returned in basis order.
#[allow(clippy::too_many_arguments)]
pub fn dn_matrix(
    grid: &Grid,
    mask: &RegionMask,
    spec: &NonlinearitySpec,
    u0: &ScalarField,
    u1: &ScalarField,
    basis: &[ExteriorInput],
    cfg: &SolverConfig,
) -> Result<Vec<DnRecord>> {
    if basis.is_empty() {
        return Err(Error::InvalidArgument("DN matrix needs a nonempty basis".into()));
    }
    basis
        .par_iter()
        .map(|input| measure(grid, mask, spec, u0, u1, input, cfg))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// Black-box access to a DN map; the only data interface of the recovery pipelines.
pub trait DnOracle: Sync {
    fn grid(&self) -> &Grid;
    fn mask(&self) -> &RegionMask;
    fn measure(&self, input: &ExteriorInput) -> Result<DnRecord>;
}

/// Oracle backed by the forward solver with a fixed hidden spec and initial data.
#[derive(Debug, Clone)]
pub struct SyntheticOracle {
    grid: Grid,
    mask: RegionMask,
    spec: NonlinearitySpec,
    u0: ScalarField,
    u1: ScalarField,
    cfg: SolverConfig,
    provenance: String,
}

impl SyntheticOracle {
    pub fn new(
        grid: Grid,
        mask: RegionMask,
        spec: NonlinearitySpec,
        u0: ScalarField,
        u1: ScalarField,
        cfg: SolverConfig,
    ) -> Result<Self> {
        mask.require_windows()?;
        check_field(&grid, &u0, "initial displacement")?;
        check_field(&grid, &u1, "initial velocity")?;
        Ok(Self {
            grid,
            mask,
            spec,
            u0,
            u1,
            cfg,
            provenance: String::new(),
        })
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    pub fn spec(&self) -> &NonlinearitySpec {
        &self.spec
    }
}

impl DnOracle for SyntheticOracle {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn mask(&self) -> &RegionMask {
        &self.mask
    }

    fn measure(&self, input: &ExteriorInput) -> Result<DnRecord> {
        Ok(measure(&self.grid, &self.mask, &self.spec, &self.u0, &self.u1, input, &self.cfg)?
            .with_provenance(self.provenance.clone()))
    }
}
