//! Exterior controls on `w1` and the Runge-approximation control problem.

use serde::Serialize;

use super::optim::{Lbfgs, OptimReport};
use crate::dnmap::{smooth_on_w1, ExteriorInput};
use crate::error::{check_finite, Error, Result};
use crate::forward::newmark::{Engine, Potential, State};
use crate::forward::{check_field, check_spacetime, SolverConfig};
use crate::lattice::{time_weights, Grid, RegionMask, ScalarField, SpaceTimeField};

/// Control coordinates: one value per `w1` node and time level. Frame `n` of
/// the exterior data is `S (c_n - c_{n-1})` with `c_{-1} = 0` and the smoothing
/// `S = P_w1 lowpass P_w1`. The increment form only changes the optimizer's
/// metric; the objective is a function of the frames.
#[derive(Debug, Clone, Copy)]
pub struct ControlSpace<'a> {
    grid: &'a Grid,
    mask: &'a RegionMask,
}

impl<'a> ControlSpace<'a> {
    pub fn new(grid: &'a Grid, mask: &'a RegionMask) -> Result<Self> {
        mask.require_windows()?;
        Ok(Self { grid, mask })
    }

    pub fn dim(&self) -> usize {
        self.grid.levels() * self.mask.w1_nodes().len()
    }

    /// Exterior data frames `S c_n`.
    pub fn to_frames(&self, c: &[f64]) -> Vec<Vec<f64>> {
        let w1 = self.mask.w1_nodes();
        let mut c = c.to_vec();
        difference(&mut c, w1.len());
        c.chunks_exact(w1.len())
            .map(|chunk| {
                let mut v = vec![0.0; self.grid.len()];
                for (&i, &x) in w1.iter().zip(chunk) {
                    v[i] = x;
                }
                smooth_on_w1(self.grid, self.mask, &ScalarField::from_vec_unchecked(v)).into_values()
            })
            .collect()
    }

    pub fn to_field(&self, c: &[f64]) -> SpaceTimeField {
        SpaceTimeField::from_frames_unchecked(
            self.to_frames(c).into_iter().map(ScalarField::from_vec_unchecked).collect(),
        )
    }

    /// Pulls a gradient with respect to the frames back to control coordinates.
    pub fn pull_back(&self, frame_gradient: &[Vec<f64>]) -> Vec<f64> {
        let w1 = self.mask.w1_nodes();
        let mut out: Vec<f64> = frame_gradient
            .iter()
            .flat_map(|g| {
                let s = smooth_on_w1(self.grid, self.mask, &ScalarField::from_vec_unchecked(g.clone()));
                w1.iter().map(move |&i| s.values()[i]).collect::<Vec<_>>()
            })
            .collect();
        difference_adjoint(&mut out, w1.len());
        out
    }
}

fn difference(c: &mut [f64], width: usize) {
    for n in (1..c.len() / width).rev() {
        for j in 0..width {
            c[n * width + j] -= c[(n - 1) * width + j];
        }
    }
}

fn difference_adjoint(c: &mut [f64], width: usize) {
    let levels = c.len() / width;
    for n in 0..levels.saturating_sub(1) {
        for j in 0..width {
            c[n * width + j] -= c[(n + 1) * width + j];
        }
    }
}

/// Interior loads `-P_Omega (-Delta)^s phi_n` of the lifted problem.
pub(crate) fn lifting_loads(grid: &Grid, mask: &RegionMask, frames: &[Vec<f64>]) -> Vec<Vec<f64>> {
    frames
        .iter()
        .map(|phi| {
            let mut load = grid.frac_vec(phi, grid.order());
            for (i, v) in load.iter_mut().enumerate() {
                *v = if mask.omega()[i] { -*v } else { 0.0 };
            }
            load
        })
        .collect()
}

/// Interior states of the linear problem with zero initial data driven by
/// exterior frames.
pub(crate) fn exterior_response(
    grid: &Grid,
    mask: &RegionMask,
    q: &[f64],
    frames: &[Vec<f64>],
    cg_tol: f64,
) -> Result<Vec<State>> {
    let engine = Engine::new(grid, mask, Potential::from_values(q), 0.0, cg_tol);
    let zero = vec![0.0; grid.len()];
    engine.march(&zero, &zero, &lifting_loads(grid, mask, frames))
}

/// Runge control problem: reach `target` on the interior cylinder with
/// exterior data on `w1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlProblem {
    pub target: SpaceTimeField,
    pub alpha: f64,
    pub max_outer_iters: usize,
    /// Stopping threshold on the gradient norm, relative to its value at zero control.
    pub grad_tol: f64,
}

impl ControlProblem {
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        check_spacetime(grid, &self.target, "control target")?;
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if self.max_outer_iters == 0 {
            return Err(Error::InvalidArgument("max_outer_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// `J(c) = ||u - target||^2_{L^2(Omega_T)} + alpha ||S c||^2_{L^2((W1)_T)}`.
pub struct RungeObjective<'a> {
    grid: &'a Grid,
    mask: &'a RegionMask,
    space: ControlSpace<'a>,
    q: Vec<f64>,
    target: Vec<Vec<f64>>,
    alpha: f64,
    weights: Vec<f64>,
    cg_tol: f64,
}

impl<'a> RungeObjective<'a> {
    pub fn new(
        grid: &'a Grid,
        mask: &'a RegionMask,
        q: &ScalarField,
        target: &SpaceTimeField,
        alpha: f64,
        cfg: &SolverConfig,
    ) -> Result<Self> {
        check_field(grid, q, "potential q")?;
        if q.values().iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidArgument("Runge control requires q >= 0".into()));
        }
        check_spacetime(grid, target, "control target")?;
        let cell = grid.cell_volume();
        Ok(Self {
            grid,
            mask,
            space: ControlSpace::new(grid, mask)?,
            q: q.values().to_vec(),
            target: target
                .frames()
                .iter()
                .map(|f| f.restricted(mask.omega()).into_values())
                .collect(),
            alpha,
            weights: time_weights(grid).iter().map(|w| w * cell).collect(),
            cg_tol: cfg.cg_tol,
        })
    }

    pub fn space(&self) -> &ControlSpace<'a> {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    /// Interior solution for control `c` (zero off the interior).
    pub fn response(&self, c: &[f64]) -> Result<SpaceTimeField> {
        let states = exterior_response(self.grid, self.mask, &self.q, &self.space.to_frames(c), self.cg_tol)?;
        Ok(SpaceTimeField::from_frames_unchecked(
            states.into_iter().map(|s| ScalarField::from_vec_unchecked(s.u)).collect(),
        ))
    }

    /// `||u_c - target|| / ||target||` on the interior cylinder.
    pub fn relative_error(&self, c: &[f64]) -> Result<f64> {
        let u = self.response(c)?;
        let (mut num, mut den) = (0.0, 0.0);
        for ((w, frame), g) in self.weights.iter().zip(u.frames()).zip(&self.target) {
            for &i in self.mask.omega_nodes() {
                num += w * (frame.values()[i] - g[i]).powi(2);
                den += w * g[i] * g[i];
            }
        }
        Ok(if den > 0.0 { (num / den).sqrt() } else { num.sqrt() })
    }

    pub fn evaluate(&self, c: &[f64]) -> Result<(f64, Vec<f64>)> {
        check_finite(c, "control")?;
        let frames = self.space.to_frames(c);
        let engine = Engine::new(self.grid, self.mask, Potential::from_values(&self.q), 0.0, self.cg_tol);
        let zero = vec![0.0; self.grid.len()];
        let states = engine.march(&zero, &zero, &lifting_loads(self.grid, self.mask, &frames))?;
        let mut value = 0.0;
        let mut load_u = Vec::with_capacity(states.len());
        for ((s, g), w) in states.iter().zip(&self.target).zip(&self.weights) {
            let mut load = vec![0.0; self.grid.len()];
            for &i in self.mask.omega_nodes() {
                let r = s.u[i] - g[i];
                value += w * r * r;
                load[i] = 2.0 * w * r;
            }
            load_u.push(load);
        }
        for (phi, w) in frames.iter().zip(&self.weights) {
            value += self.alpha * w * phi.iter().map(|v| v * v).sum::<f64>();
        }
        let adj = engine.adjoint(&load_u, &[])?;
        let frame_grad: Vec<Vec<f64>> = adj
            .forces
            .iter()
            .zip(&frames)
            .zip(&self.weights)
            .map(|((z, phi), w)| {
                let az = self.grid.frac_vec(z, self.grid.order());
                az.iter().zip(phi).map(|(a, p)| -a + 2.0 * self.alpha * w * p).collect()
            })
            .collect();
        Ok((value, self.space.pull_back(&frame_grad)))
    }
}

/// Result of [`runge_control`].
#[derive(Debug, Clone)]
pub struct RungeOutcome {
    pub input: ExteriorInput,
    /// Control coordinates, reusable as a warm start.
    pub coefficients: Vec<f64>,
    /// Interior solution driven by `input`.
    pub v: SpaceTimeField,
    pub achieved_error: f64,
    pub alpha: f64,
    pub report: OptimReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub achieved_error: f64,
    pub iterations: usize,
    pub objective: f64,
}

pub fn runge_control(
    problem: &ControlProblem,
    grid: &Grid,
    mask: &RegionMask,
    q: &ScalarField,
    cfg: &SolverConfig,
) -> Result<RungeOutcome> {
    runge_control_from(problem, grid, mask, q, cfg, None)
}

/// As [`runge_control`] starting from given control coordinates.
pub fn runge_control_from(
    problem: &ControlProblem,
    grid: &Grid,
    mask: &RegionMask,
    q: &ScalarField,
    cfg: &SolverConfig,
    warm: Option<&[f64]>,
) -> Result<RungeOutcome> {
    problem.validate(grid)?;
    let objective = RungeObjective::new(grid, mask, q, &problem.target, problem.alpha, cfg)?;
    let zero = vec![0.0; objective.dim()];
    let (_, g0) = objective.evaluate(&zero)?;
    let g0_norm = g0.iter().map(|v| v * v).sum::<f64>().sqrt();
    let start = match warm {
        Some(w) if w.len() == objective.dim() => w.to_vec(),
        Some(w) => {
            return Err(Error::Shape {
                context: "warm start".into(),
                expected: objective.dim(),
                actual: w.len(),
            })
        }
        None => zero,
    };
    let optimizer = Lbfgs {
        max_iters: problem.max_outer_iters,
        grad_tol: problem.grad_tol * g0_norm,
        ..Lbfgs::default()
    };
    let report = optimizer.minimize(|c| objective.evaluate(c), start)?;
    let coefficients = report.x.clone();
    let phi = objective.space().to_field(&coefficients);
    let input = ExteriorInput::new(grid, mask, phi, 1.0, format!("runge_alpha_{:e}", problem.alpha))?;
    let v = objective.response(&coefficients)?;
    let achieved_error = objective.relative_error(&coefficients)?;
    Ok(RungeOutcome {
        input,
        coefficients,
        v,
        achieved_error,
        alpha: problem.alpha,
        report,
    })
}

/// Runs the control problem along `alphas` in the given order, warm-starting
/// each solve from the previous control.
pub fn runge_sweep(
    target: &SpaceTimeField,
    alphas: &[f64],
    max_outer_iters: usize,
    grad_tol: f64,
    grid: &Grid,
    mask: &RegionMask,
    q: &ScalarField,
    cfg: &SolverConfig,
) -> Result<Vec<RungeOutcome>> {
    let mut out: Vec<RungeOutcome> = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let problem = ControlProblem {
            target: target.clone(),
            alpha,
            max_outer_iters,
            grad_tol,
        };
        let warm = out.last().map(|o| o.coefficients.as_slice());
        out.push(runge_control_from(&problem, grid, mask, q, cfg, warm)?);
    }
    Ok(out)
}

pub fn sweep_table(outcomes: &[RungeOutcome]) -> Vec<SweepRow> {
    outcomes
        .iter()
        .map(|o| SweepRow {
            alpha: o.alpha,
            achieved_error: o.achieved_error,
            iterations: o.report.iterations,
            objective: o.report.objective,
        })
        .collect()
}
