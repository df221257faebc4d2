//! Recovery of initial data from the passive `w2` trace.

use super::optim::{IterationRecord, NormalCg};
use super::tikhonov::{LinearModel, Tikhonov};
use crate::dnmap::{observe, DnRecord};
use crate::error::{Error, Result};
use crate::forward::newmark::{Engine, Potential};
use crate::forward::{check_spacetime, solve_nonlinear, NonlinearityKind, NonlinearitySpec, SolverConfig};
use crate::lattice::{Grid, RegionMask, ScalarField, SpaceTimeField};

enum Background {
    Static(Vec<f64>),
    Levels(Vec<Vec<f64>>),
}

/// Map from interior `(u0, u1)` coordinates to passive traces of the linear
/// problem with the given background potential.
struct InitialModel<'a> {
    grid: &'a Grid,
    mask: &'a RegionMask,
    background: Background,
    cg_tol: f64,
}

impl InitialModel<'_> {
    fn engine(&self) -> Engine<'_> {
        let potential = match &self.background {
            Background::Static(q) => Potential::from_values(q),
            Background::Levels(qs) => Potential::Levels(qs),
        };
        Engine::new(self.grid, self.mask, potential, 0.0, self.cg_tol)
    }

    fn split(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let nodes = self.mask.omega_nodes();
        let mut u0 = vec![0.0; self.grid.len()];
        let mut u1 = vec![0.0; self.grid.len()];
        for (k, &i) in nodes.iter().enumerate() {
            u0[i] = x[k];
            u1[i] = x[nodes.len() + k];
        }
        (u0, u1)
    }
}

impl LinearModel for InitialModel<'_> {
    fn dim(&self) -> usize {
        2 * self.mask.omega_nodes().len()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let (u0, u1) = self.split(x);
        let loads = vec![vec![0.0; self.grid.len()]; self.grid.levels()];
        let states = self.engine().march(&u0, &u1, &loads)?;
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
    }

    fn transpose(&self, lambda: &[Vec<f64>]) -> Result<Vec<f64>> {
        let load_u: Vec<Vec<f64>> = lambda
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
        let adj = self.engine().adjoint(&load_u, &[])?;
        let nodes = self.mask.omega_nodes();
        Ok(nodes.iter().map(|&i| adj.u0[i]).chain(nodes.iter().map(|&i| adj.v0[i])).collect())
    }
}

/// Result of [`recover_initial_data`].
#[derive(Debug, Clone)]
pub struct InitialDataRecovery {
    pub u0: ScalarField,
    pub u1: ScalarField,
    /// Absolute Tikhonov weight used.
    pub alpha: f64,
    pub relative_misfit: f64,
    /// Normal-equation iterations, concatenated over outer steps.
    pub history: Vec<IterationRecord>,
    pub outer_steps: usize,
    pub warnings: Vec<String>,
}

/// Tikhonov problem in `(u0, u1)` for a known spec without damping.
pub struct InitialDataProblem<'a> {
    grid: &'a Grid,
    mask: &'a RegionMask,
    spec: &'a NonlinearitySpec,
    observed: Vec<Vec<f64>>,
    cfg: &'a SolverConfig,
}

impl<'a> InitialDataProblem<'a> {
    pub fn new(
        grid: &'a Grid,
        mask: &'a RegionMask,
        spec: &'a NonlinearitySpec,
        observed: &SpaceTimeField,
        cfg: &'a SolverConfig,
    ) -> Result<Self> {
        mask.require_windows()?;
        check_spacetime(grid, observed, "passive trace")?;
        if spec.damping().is_some() {
            return Err(Error::Unsupported("initial-data recovery with damping".into()));
        }
        Ok(Self {
            grid,
            mask,
            spec,
            observed: observed.frames().iter().map(|f| f.values().to_vec()).collect(),
            cfg,
        })
    }

    pub fn dim(&self) -> usize {
        2 * self.mask.omega_nodes().len()
    }

    fn linear_potential(&self) -> Option<Vec<f64>> {
        match self.spec.kind() {
            NonlinearityKind::Zero => Some(vec![0.0; self.grid.len()]),
            NonlinearityKind::LinearPotential { a } => Some(a.values().to_vec()),
            _ => None,
        }
    }

    /// Frames of `u` for data `x` and the tangent model around them.
    fn linearize(&self, x: &[f64]) -> Result<(Vec<Vec<f64>>, InitialModel<'a>)> {
        let base = InitialModel {
            grid: self.grid,
            mask: self.mask,
            background: Background::Static(vec![0.0; self.grid.len()]),
            cg_tol: self.cfg.cg_tol,
        };
        if let Some(q) = self.linear_potential() {
            let model = InitialModel {
                background: Background::Static(q),
                ..base
            };
            let pred = model.apply(x)?;
            return Ok((pred, model));
        }
        let (u0, u1) = base.split(x);
        let h = SpaceTimeField::zeros(self.grid);
        let traj = solve_nonlinear(
            self.grid,
            self.mask,
            self.spec,
            &h,
            &ScalarField::from_vec_unchecked(u0),
            &ScalarField::from_vec_unchecked(u1),
            self.cfg,
        )?;
        let levels = traj
            .u
            .frames()
            .iter()
            .map(|f| {
                let mut q = vec![0.0; self.grid.len()];
                for &i in self.mask.omega_nodes() {
                    q[i] = self.spec.derivative(i, f.values()[i])?;
                }
                Ok(q)
            })
            .collect::<Result<Vec<_>>>()?;
        let pred = observe(self.grid, self.mask, &traj.u)
            .frames()
            .iter()
            .map(|f| f.values().to_vec())
            .collect();
        Ok((
            pred,
            InitialModel {
                background: Background::Levels(levels),
                ..base
            },
        ))
    }

    fn residual(&self, pred: &[Vec<f64>]) -> Vec<Vec<f64>> {
        pred.iter()
            .zip(&self.observed)
            .map(|(p, d)| p.iter().zip(d).map(|(a, b)| b - a).collect())
            .collect()
    }

    /// Objective and gradient for an absolute `alpha`; exact for linear specs
    /// and up to the Picard tolerance otherwise.
    pub fn objective(&self, x: &[f64], alpha: f64) -> Result<(f64, Vec<f64>)> {
        let (pred, model) = self.linearize(x)?;
        let r = self.residual(&pred);
        // J(x + d) ~ ||G d - r||^2 + alpha ||x + d||^2 at d = 0
        let (value, grad) = Tikhonov::new(&model, self.grid, self.mask, r).objective(&vec![0.0; x.len()], alpha, Some(&x.iter().map(|v| -v).collect::<Vec<_>>()))?;
        Ok((value, grad))
    }

    pub fn fields(&self, x: &[f64]) -> (ScalarField, ScalarField) {
        let nodes = self.mask.omega_nodes();
        let mut u0 = vec![0.0; self.grid.len()];
        let mut u1 = vec![0.0; self.grid.len()];
        for (k, &i) in nodes.iter().enumerate() {
            u0[i] = x[k];
            u1[i] = x[nodes.len() + k];
        }
        (ScalarField::from_vec_unchecked(u0), ScalarField::from_vec_unchecked(u1))
    }

    pub fn coordinates(&self, u0: &ScalarField, u1: &ScalarField) -> Vec<f64> {
        let nodes = self.mask.omega_nodes();
        nodes.iter().map(|&i| u0.values()[i]).chain(nodes.iter().map(|&i| u1.values()[i])).collect()
    }

    /// Gauss-Newton on the Tikhonov functional with relative weight `alpha`;
    /// a single step is exact for linear specs.
    pub fn solve(&self, alpha: f64, max_outer: usize, cg: &NormalCg) -> Result<InitialDataRecovery> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be >= 0, got {alpha}")));
        }
        let linear = self.linear_potential().is_some();
        let mut warnings = Vec::new();
        if !linear {
            warnings.push("nonlinear spec: Gauss-Newton converges only locally".to_string());
        }
        let obs_norm = {
            let (_, model) = self.linearize(&vec![0.0; self.dim()])?;
            let tik = Tikhonov::new(&model, self.grid, self.mask, self.observed.clone());
            (tik.observed_norm(), tik.gram_scale(20)?)
        };
        let absolute = alpha * obs_norm.1;
        let mut x = vec![0.0; self.dim()];
        let mut history = Vec::new();
        let mut outer_steps = 0;
        let mut misfit = obs_norm.0;
        let mut current = misfit * misfit;
        for _ in 0..max_outer.max(1) {
            let (pred, model) = self.linearize(&x)?;
            let r = self.residual(&pred);
            let tik = Tikhonov::new(&model, self.grid, self.mask, r);
            let center: Vec<f64> = x.iter().map(|v| -v).collect();
            let report = tik.solve(absolute, Some(&center), None, cg)?;
            history.extend(report.history.iter().copied());
            outer_steps += 1;
            if linear {
                x.iter_mut().zip(&report.x).for_each(|(a, d)| *a += d);
                misfit = Tikhonov::new(&model, self.grid, self.mask, self.observed.clone()).misfit(&x)?;
                break;
            }
            let step_norm = report.x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..6 {
                let trial: Vec<f64> = x.iter().zip(&report.x).map(|(a, d)| a + t * d).collect();
                let (pred, _) = self.linearize(&trial)?;
                let r = self.residual(&pred);
                let data: f64 = Tikhonov::new(&model, self.grid, self.mask, r).misfit(&vec![0.0; self.dim()])?;
                let value = data * data + absolute * self.grid.cell_volume() * trial.iter().map(|v| v * v).sum::<f64>();
                if value <= current {
                    current = value;
                    misfit = data;
                    x = trial;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted || step_norm * t <= 1e-8 * x_norm.max(f64::MIN_POSITIVE) {
                break;
            }
        }
        let (u0, u1) = self.fields(&x);
        Ok(InitialDataRecovery {
            u0,
            u1,
            alpha: absolute,
            relative_misfit: if obs_norm.0 > 0.0 { misfit / obs_norm.0 } else { misfit },
            history,
            outer_steps,
            warnings,
        })
    }
}

/// Reconstructs `(u0, u1)` from a passive record for a known spec. `alpha` is
/// relative to the largest eigenvalue of the data Gram operator at zero data.
pub fn recover_initial_data(
    passive: &DnRecord,
    grid: &Grid,
    mask: &RegionMask,
    spec_known: &NonlinearitySpec,
    alpha: f64,
    cfg: &SolverConfig,
) -> Result<InitialDataRecovery> {
    if passive.input.amplitude() != 0.0 && passive.input.phi().max_abs() != 0.0 {
        return Err(Error::InvalidArgument(format!(
            "record '{}' is not a passive measurement",
            passive.input.label()
        )));
    }
    InitialDataProblem::new(grid, mask, spec_known, &passive.trace, cfg)?.solve(alpha, 8, &NormalCg::default())
}
