//! Inversion of interior sources `m(x) w(x, t)` with known weight `w` from
//! `w2` traces of the linear problem with zero initial data.

use rayon::prelude::*;

use super::optim::{NormalCg, OptimReport};
use super::tikhonov::{LinearModel, Tikhonov};
use crate::error::{Error, Result};
use crate::forward::newmark::{Engine, Potential};
use crate::forward::{check_field, check_spacetime, SolverConfig};
use crate::lattice::{Grid, RegionMask, ScalarField, SpaceTimeField};

/// Source-to-trace map for one or more experiments sharing the unknown `m`.
pub(crate) struct SourceModel<'a> {
    grid: &'a Grid,
    mask: &'a RegionMask,
    potential: Vec<f64>,
    weights: Vec<Vec<Vec<f64>>>,
    cg_tol: f64,
}

impl<'a> SourceModel<'a> {
    pub fn new(grid: &'a Grid, mask: &'a RegionMask, potential: &ScalarField, weights: &[SpaceTimeField], cfg: &SolverConfig) -> Result<Self> {
        check_field(grid, potential, "background potential")?;
        if weights.is_empty() {
            return Err(Error::InvalidArgument("source inversion needs at least one experiment".into()));
        }
        for w in weights {
            check_spacetime(grid, w, "source weight")?;
        }
        Ok(Self {
            grid,
            mask,
            potential: potential.values().to_vec(),
            weights: weights
                .iter()
                .map(|w| w.frames().iter().map(|f| f.values().to_vec()).collect())
                .collect(),
            cg_tol: cfg.cg_tol,
        })
    }

    fn engine(&self) -> Engine<'_> {
        Engine::new(self.grid, self.mask, Potential::from_values(&self.potential), 0.0, self.cg_tol)
    }

    /// Spreads interior coordinates to a lattice field.
    pub fn spread(&self, x: &[f64]) -> Vec<f64> {
        let mut m = vec![0.0; self.grid.len()];
        for (&i, &v) in self.mask.omega_nodes().iter().zip(x) {
            m[i] = v;
        }
        m
    }

    pub fn gather(&self, field: &[f64]) -> Vec<f64> {
        self.mask.omega_nodes().iter().map(|&i| field[i]).collect()
    }
}

impl LinearModel for SourceModel<'_> {
    fn dim(&self) -> usize {
        self.mask.omega_nodes().len()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let m = self.spread(x);
        let engine = self.engine();
        let zero = vec![0.0; self.grid.len()];
        let per: Vec<Vec<Vec<f64>>> = self
            .weights
            .par_iter()
            .map(|w| {
                let loads: Vec<Vec<f64>> = w.iter().map(|wn| wn.iter().zip(&m).map(|(a, b)| a * b).collect()).collect();
                let states = engine.march(&zero, &zero, &loads)?;
                Ok(states
                    .iter()
                    .map(|s| {
                        let mut t = self.grid.frac_vec(&s.u, self.grid.order());
                        for (v, &keep) in t.iter_mut().zip(self.mask.w2()) {
                            if !keep {
                                *v = 0.0;
                            }
                        }
                        t
                    })
                    .collect())
            })
            .collect::<Result<_>>()?;
        Ok(per.into_iter().flatten().collect())
    }

    fn transpose(&self, lambda: &[Vec<f64>]) -> Result<Vec<f64>> {
        let engine = self.engine();
        let levels = self.grid.levels();
        let parts: Vec<Vec<f64>> = self
            .weights
            .par_iter()
            .enumerate()
            .map(|(k, w)| {
                let load_u: Vec<Vec<f64>> = lambda[k * levels..(k + 1) * levels]
                    .iter()
                    .map(|l| {
                        let mut on_w2 = vec![0.0; self.grid.len()];
                        for &i in self.mask.w2_nodes() {
                            on_w2[i] = l[i];
                        }
                        let mut back = self.grid.frac_vec(&on_w2, self.grid.order());
                        self.mask.project_omega_in_place(&mut back);
                        back
                    })
                    .collect();
                let adj = engine.adjoint(&load_u, &[])?;
                let mut g = vec![0.0; self.dim()];
                for (z, wn) in adj.forces.iter().zip(w) {
                    for (gk, &i) in g.iter_mut().zip(self.mask.omega_nodes()) {
                        *gk += wn[i] * z[i];
                    }
                }
                Ok(g)
            })
            .collect::<Result<_>>()?;
        let mut total = vec![0.0; self.dim()];
        for p in parts {
            total.iter_mut().zip(&p).for_each(|(t, v)| *t += v);
        }
        Ok(total)
    }
}

/// Result of [`source_inversion`].
#[derive(Debug, Clone)]
pub struct SourceInversion {
    /// Reconstructed source amplitude, supported on the interior.
    pub m: ScalarField,
    /// Absolute Tikhonov weight actually used.
    pub alpha: f64,
    /// `||trace(m) - observed|| / ||observed||`, or the absolute misfit when nothing was observed.
    pub relative_misfit: f64,
    pub report: OptimReport,
}

/// Tikhonov-regularized source inversion. `alpha` is relative to the largest
/// eigenvalue of the data Gram operator, which makes the reconstruction
/// independent of the overall scale of the traces.
pub struct SourceProblem<'a> {
    model: SourceModel<'a>,
    observed: Vec<Vec<f64>>,
    grid: &'a Grid,
    mask: &'a RegionMask,
    scale: Option<f64>,
}

impl<'a> SourceProblem<'a> {
    /// One experiment per `(weight, observed trace)` pair, solved on the
    /// background `potential`.
    pub fn new(
        grid: &'a Grid,
        mask: &'a RegionMask,
        potential: &ScalarField,
        experiments: &[(SpaceTimeField, SpaceTimeField)],
        cfg: &SolverConfig,
    ) -> Result<Self> {
        mask.require_windows()?;
        let weights: Vec<SpaceTimeField> = experiments.iter().map(|(w, _)| w.clone()).collect();
        let model = SourceModel::new(grid, mask, potential, &weights, cfg)?;
        let mut observed = Vec::with_capacity(experiments.len() * grid.levels());
        for (_, obs) in experiments {
            check_spacetime(grid, obs, "observed trace")?;
            observed.extend(obs.frames().iter().map(|f| f.values().to_vec()));
        }
        Ok(Self {
            model,
            observed,
            grid,
            mask,
            scale: None,
        })
    }

    fn tikhonov(&self) -> Tikhonov<'_, SourceModel<'a>> {
        Tikhonov::new(&self.model, self.grid, self.mask, self.observed.clone())
    }

    /// Largest Gram eigenvalue; the unit of the relative `alpha`.
    pub fn scale(&mut self) -> Result<f64> {
        if let Some(s) = self.scale {
            return Ok(s);
        }
        let s = self.tikhonov().gram_scale(20)?;
        self.scale = Some(s);
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// Objective and gradient in interior coordinates for an absolute `alpha`.
    pub fn objective(&self, x: &[f64], alpha: f64) -> Result<(f64, Vec<f64>)> {
        self.tikhonov().objective(x, alpha, None)
    }

    pub fn field(&self, x: &[f64]) -> ScalarField {
        ScalarField::from_vec_unchecked(self.model.spread(x))
    }

    pub fn coordinates(&self, m: &ScalarField) -> Vec<f64> {
        self.model.gather(m.values())
    }

    /// Predicted traces, one per experiment.
    pub fn traces(&self, m: &ScalarField) -> Result<Vec<SpaceTimeField>> {
        let frames = self.model.apply(&self.model.gather(m.values()))?;
        Ok(frames
            .chunks(self.grid.levels())
            .map(|c| SpaceTimeField::from_frames_unchecked(c.iter().cloned().map(ScalarField::from_vec_unchecked).collect()))
            .collect())
    }

    /// Solves with relative weight `alpha`, optionally pulling towards `center`.
    pub fn solve(&mut self, alpha: f64, center: Option<&ScalarField>, warm: Option<&ScalarField>, cg: &NormalCg) -> Result<SourceInversion> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be >= 0, got {alpha}")));
        }
        let absolute = alpha * self.scale()?;
        let tik = self.tikhonov();
        let center = center.map(|c| self.model.gather(c.values()));
        let warm = warm.map(|w| self.model.gather(w.values()));
        let report = tik.solve(absolute, center.as_deref(), warm.as_deref(), cg)?;
        let misfit = tik.misfit(&report.x)?;
        let obs = tik.observed_norm();
        Ok(SourceInversion {
            m: self.field(&report.x),
            alpha: absolute,
            relative_misfit: if obs > 0.0 { misfit / obs } else { misfit },
            report,
        })
    }
}

/// Reconstructs `m` on the interior from the `w2` trace of the solution driven
/// by `m(x) weight(x, t)` with zero initial data and no potential.
pub fn source_inversion(
    observed: &SpaceTimeField,
    weight: &SpaceTimeField,
    grid: &Grid,
    mask: &RegionMask,
    alpha: f64,
    cfg: &SolverConfig,
) -> Result<SourceInversion> {
    let mut problem = SourceProblem::new(grid, mask, &ScalarField::zeros(grid), &[(weight.clone(), observed.clone())], cfg)?;
    problem.solve(alpha, None, None, &NormalCg::default())
}
