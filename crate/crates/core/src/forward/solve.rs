//! Linear, nonlinear (Picard on time slabs), exterior-data and viscous solvers.

use serde::{Deserialize, Serialize};

use super::config::SolverConfig;
use super::energy::{energy_log, EnergyRecord};
use super::newmark::{Engine, Potential, State};
use super::nonlinearity::{validate_assumption, NonlinearitySpec};
use crate::error::{check_finite, check_len, Error, Result};
use crate::lattice::{hs_sq, inner_raw, region_sq, Grid, RegionMask, ScalarField, SpaceTimeField};

/// Outcome of one Picard slab attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlabRecord {
    pub start_level: usize,
    pub steps: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Ratios of successive iterate differences, from the second iteration on.
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    /// Halvings of the slab length performed before this attempt.
    pub bisections: usize,
}

/// A solved trajectory. For reverse-time viscous solves the frames are in
/// physical time while the energy log follows the solver clock.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub u: SpaceTimeField,
    pub ut: SpaceTimeField,
    pub energy_log: Vec<EnergyRecord>,
    pub picard_log: Vec<SlabRecord>,
}

impl Trajectory {
    pub fn max_picard_ratio(&self) -> f64 {
        self.picard_log
            .iter()
            .filter(|s| s.converged)
            .map(|s| s.max_ratio)
            .fold(0.0, f64::max)
    }

    pub fn total_bisections(&self) -> usize {
        self.picard_log
            .iter()
            .map(|s| s.bisections)
            .max()
            .unwrap_or(0)
    }
}

pub(crate) fn check_field(grid: &Grid, f: &ScalarField, context: &str) -> Result<()> {
    check_len(f.len(), grid.len(), context)?;
    check_finite(f.values(), context)
}

pub(crate) fn check_spacetime(grid: &Grid, f: &SpaceTimeField, context: &str) -> Result<()> {
    check_len(f.levels(), grid.levels(), context)?;
    for frame in f.frames() {
        check_field(grid, frame, context)?;
    }
    Ok(())
}

pub(crate) fn check_interior(mask: &RegionMask, values: &[f64], context: &str) -> Result<()> {
    match values
        .iter()
        .zip(mask.omega())
        .position(|(&v, &inside)| !inside && v != 0.0)
    {
        Some(i) => Err(Error::Support(format!(
            "{context} is nonzero at exterior node {i}"
        ))),
        None => Ok(()),
    }
}

fn interior_loads(mask: &RegionMask, f: &SpaceTimeField, context: &str) -> Result<Vec<Vec<f64>>> {
    f.frames()
        .iter()
        .map(|fr| {
            check_interior(mask, fr.values(), context)?;
            Ok(fr.values().to_vec())
        })
        .collect()
}

fn assemble(
    states: Vec<State>,
    energy_log: Vec<EnergyRecord>,
    picard_log: Vec<SlabRecord>,
) -> Trajectory {
    let (u, ut): (Vec<_>, Vec<_>) = states
        .into_iter()
        .map(|s| {
            (
                ScalarField::from_vec_unchecked(s.u),
                ScalarField::from_vec_unchecked(s.v),
            )
        })
        .unzip();
    Trajectory {
        u: SpaceTimeField::from_frames_unchecked(u),
        ut: SpaceTimeField::from_frames_unchecked(ut),
        energy_log,
        picard_log,
    }
}

/// Linear march with static potential and viscosity, plus its energy log.
fn linear_core(
    grid: &Grid,
    mask: &RegionMask,
    q: &[f64],
    loads: &[Vec<f64>],
    u0: &[f64],
    v0: &[f64],
    eps: f64,
    cfg: &SolverConfig,
) -> Result<(Vec<State>, Vec<EnergyRecord>)> {
    let engine = Engine::new(grid, mask, Potential::from_values(q), eps, cfg.cg_tol);
    let states = engine.march(u0, v0, loads)?;
    let omega = mask.omega_region();
    let log = energy_log(
        grid,
        mask,
        &states,
        |_, u| {
            let qu: Vec<f64> = u.iter().zip(q).map(|(a, b)| a * b).collect();
            Ok(inner_raw(grid, &qu, u, omega))
        },
        loads,
        |n| {
            if eps == 0.0 {
                return Ok(0.0);
            }
            let w: Vec<f64> = states[n]
                .v
                .iter()
                .zip(&states[n + 1].v)
                .map(|(a, b)| a + b)
                .collect();
            let mut kw = vec![0.0; w.len()];
            engine.stiffness(n, &w, &mut kw);
            Ok(0.5 * grid.dt() * eps * inner_raw(grid, &kw, &w, omega))
        },
    )?;
    Ok((states, log))
}

fn check_linear_inputs(
    grid: &Grid,
    mask: &RegionMask,
    q: &ScalarField,
    f_src: &SpaceTimeField,
    u0: &ScalarField,
    u1: &ScalarField,
    cfg: &SolverConfig,
) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    check_field(grid, q, "potential q")?;
    check_field(grid, u0, "initial displacement")?;
    check_field(grid, u1, "initial velocity")?;
    check_spacetime(grid, f_src, "source")?;
    check_interior(mask, u0.values(), "initial displacement")?;
    check_interior(mask, u1.values(), "initial velocity")?;
    interior_loads(mask, f_src, "source")
}

/// Solves `u'' + P A P u + q u = F` on the interior with zero exterior values.
pub fn solve_linear(
    grid: &Grid,
    mask: &RegionMask,
    q: &ScalarField,
    f_src: &SpaceTimeField,
    u0: &ScalarField,
    u1: &ScalarField,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    let loads = check_linear_inputs(grid, mask, q, f_src, u0, u1, cfg)?;
    let (states, log) = linear_core(
        grid,
        mask,
        q.values(),
        &loads,
        u0.values(),
        u1.values(),
        0.0,
        cfg,
    )?;
    Ok(assemble(states, log, Vec::new()))
}

/// Adds the implicit damping `eps (A + q) u_t`. With `reverse_time` the data
/// `(u0, u1)` are terminal values at `T` and the backward-damped problem
/// `u'' - eps (A + q) u_t + (A + q) u = F` is solved through `t -> T - t`.
#[allow(clippy::too_many_arguments)]
pub fn solve_viscous(
    grid: &Grid,
    mask: &RegionMask,
    q: &ScalarField,
    f_src: &SpaceTimeField,
    u0: &ScalarField,
    u1: &ScalarField,
    eps: f64,
    cfg: &SolverConfig,
    reverse_time: bool,
) -> Result<Trajectory> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "viscosity must be >= 0, got {eps}"
        )));
    }
    let mut loads = check_linear_inputs(grid, mask, q, f_src, u0, u1, cfg)?;
    if !reverse_time {
        let (states, log) = linear_core(
            grid,
            mask,
            q.values(),
            &loads,
            u0.values(),
            u1.values(),
            eps,
            cfg,
        )?;
        return Ok(assemble(states, log, Vec::new()));
    }
    loads.reverse();
    let v0: Vec<f64> = u1.values().iter().map(|v| -v).collect();
    let (mut states, log) =
        linear_core(grid, mask, q.values(), &loads, u0.values(), &v0, eps, cfg)?;
    states.reverse();
    for s in &mut states {
        s.v.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(assemble(states, log, Vec::new()))
}

/// Slab norm of `(u, v)` sequences: max over levels of the `H^s` seminorm of the
/// displacement and the interior `L^2` norm of the velocity.
fn slab_norm(grid: &Grid, mask: &RegionMask, u: &[Vec<f64>], v: &[Vec<f64>]) -> f64 {
    u.iter()
        .zip(v)
        .map(|(a, b)| {
            hs_sq(grid, a)
                .sqrt()
                .max(region_sq(grid, b, mask.omega_region()).sqrt())
        })
        .fold(0.0, f64::max)
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Largest accepted ratio of successive Picard differences; a slab that
/// contracts more slowly is halved.
pub const CONTRACTION_BOUND: f64 = 0.5;

struct Picard<'a> {
    grid: &'a Grid,
    mask: &'a RegionMask,
    spec: &'a NonlinearitySpec,
    engine: Engine<'a>,
    source: &'a [Vec<f64>],
    cfg: &'a SolverConfig,
}

enum SlabOutcome {
    Converged(Vec<State>, SlabRecord),
    Failed(SlabRecord, String),
}

impl Picard<'_> {
    fn load(&self, level: usize, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let n = self.grid.len();
        let mut f = vec![0.0; n];
        let mut g = vec![0.0; n];
        self.spec.apply_f(self.mask, u, &mut f)?;
        self.spec.apply_g(self.mask, v, &mut g);
        let h = &self.source[level];
        Ok((0..n).map(|i| h[i] - f[i] - g[i]).collect())
    }

    fn slab(
        &self,
        from: &State,
        start: usize,
        steps: usize,
        bisections: usize,
    ) -> Result<SlabOutcome> {
        let dt = self.grid.dt();
        let mut us: Vec<Vec<f64>> = (1..=steps)
            .map(|j| {
                from.u
                    .iter()
                    .zip(&from.v)
                    .map(|(u, v)| u + j as f64 * dt * v)
                    .collect()
            })
            .collect();
        let mut vs: Vec<Vec<f64>> = vec![from.v.clone(); steps];
        let mut ratios = Vec::new();
        let mut previous: Option<f64> = None;
        let record = |iterations: usize, converged: bool, ratios: &[f64]| SlabRecord {
            start_level: start,
            steps,
            iterations,
            converged,
            ratios: ratios.to_vec(),
            max_ratio: ratios.iter().copied().fold(0.0, f64::max),
            bisections,
        };
        for it in 1..=self.cfg.picard_max_iters {
            let loads = match (1..=steps)
                .map(|j| self.load(start + j, &us[j - 1], &vs[j - 1]))
                .collect::<Result<Vec<_>>>()
            {
                Ok(l) => l,
                Err(e @ Error::Extrapolation { .. }) => {
                    return Ok(SlabOutcome::Failed(
                        record(it, false, &ratios),
                        e.to_string(),
                    ))
                }
                Err(e) => return Err(e),
            };
            if loads.iter().any(|l| l.iter().any(|x| !x.is_finite())) {
                return Ok(SlabOutcome::Failed(
                    record(it, false, &ratios),
                    "non-finite load".into(),
                ));
            }
            let states = match self.engine.march_from(from, start, &loads) {
                Ok(s) => s,
                Err(e @ (Error::CgNotConverged { .. } | Error::InvalidArgument(_))) => {
                    return Ok(SlabOutcome::Failed(
                        record(it, false, &ratios),
                        e.to_string(),
                    ))
                }
                Err(e) => return Err(e),
            };
            let du: Vec<Vec<f64>> = states.iter().zip(&us).map(|(s, u)| diff(&s.u, u)).collect();
            let dv: Vec<Vec<f64>> = states.iter().zip(&vs).map(|(s, v)| diff(&s.v, v)).collect();
            let change = slab_norm(self.grid, self.mask, &du, &dv);
            let new_u: Vec<Vec<f64>> = states.iter().map(|s| s.u.clone()).collect();
            let new_v: Vec<Vec<f64>> = states.iter().map(|s| s.v.clone()).collect();
            let scale = slab_norm(self.grid, self.mask, &new_u, &new_v);
            if !change.is_finite() || !scale.is_finite() {
                return Ok(SlabOutcome::Failed(
                    record(it, false, &ratios),
                    "iterates blew up".into(),
                ));
            }
            if let Some(prev) = previous {
                let ratio = if prev > 0.0 { change / prev } else { 0.0 };
                ratios.push(ratio);
                if ratio > CONTRACTION_BOUND {
                    let reason =
                        format!("contraction ratio {ratio:.3} exceeds {CONTRACTION_BOUND}");
                    return Ok(SlabOutcome::Failed(record(it, false, &ratios), reason));
                }
            }
            previous = Some(change);
            if change <= self.cfg.picard_tol * scale.max(f64::MIN_POSITIVE) || change == 0.0 {
                return Ok(SlabOutcome::Converged(states, record(it, true, &ratios)));
            }
            us = new_u;
            vs = new_v;
        }
        let it = self.cfg.picard_max_iters;
        Ok(SlabOutcome::Failed(
            record(it, false, &ratios),
            format!("no convergence in {it} iterations"),
        ))
    }

    fn run(&self, u0: &[f64], v0: &[f64]) -> Result<(Vec<State>, Vec<SlabRecord>)> {
        let first = self.engine.initial(u0, v0, &self.load(0, u0, v0)?);
        let mut states = vec![first];
        let mut log = Vec::new();
        let mut slab = self.cfg.slab_steps;
        let mut bisections = 0;
        let last = self.grid.steps();
        let mut start = 0;
        while start < last {
            let steps = slab.min(last - start);
            match self.slab(&states[start], start, steps, bisections)? {
                SlabOutcome::Converged(new, record) => {
                    states.extend(new);
                    log.push(record);
                    start += steps;
                }
                SlabOutcome::Failed(record, reason) => {
                    log.push(record);
                    if steps == 1 {
                        return Err(Error::PicardFailed {
                            level: start,
                            reason: format!("{reason} with a single-step slab"),
                        });
                    }
                    slab = steps / 2;
                    bisections += 1;
                }
            }
        }
        Ok((states, log))
    }
}

fn nonlinear_core(
    grid: &Grid,
    mask: &RegionMask,
    spec: &NonlinearitySpec,
    source: &[Vec<f64>],
    u0: &[f64],
    v0: &[f64],
    cfg: &SolverConfig,
) -> Result<(Vec<State>, Vec<EnergyRecord>, Vec<SlabRecord>)> {
    if let Some(a) = spec.as_linear_potential() {
        let (states, log) = linear_core(grid, mask, a.values(), source, u0, v0, 0.0, cfg)?;
        return Ok((states, log, Vec::new()));
    }
    let picard = Picard {
        grid,
        mask,
        spec,
        engine: Engine::new(grid, mask, Potential::None, 0.0, cfg.cg_tol),
        source,
        cfg,
    };
    let (states, slabs) = picard.run(u0, v0)?;
    let omega = mask.omega_region();
    let damping_load = |v: &[f64]| {
        let mut g = vec![0.0; v.len()];
        spec.apply_g(mask, v, &mut g);
        g
    };
    let log = energy_log(
        grid,
        mask,
        &states,
        |_, u| Ok(2.0 * spec.potential_integral(grid, mask, u)?),
        source,
        |n| {
            if spec.damping().is_none() {
                return Ok(0.0);
            }
            let g: Vec<f64> = damping_load(&states[n].v)
                .iter()
                .zip(damping_load(&states[n + 1].v))
                .map(|(a, b)| a + b)
                .collect();
            let du = diff(&states[n + 1].u, &states[n].u);
            Ok(inner_raw(grid, &g, &du, omega))
        },
    )?;
    Ok((states, log, slabs))
}

fn check_nonlinear_inputs(
    grid: &Grid,
    mask: &RegionMask,
    spec: &NonlinearitySpec,
    h: &SpaceTimeField,
    u0: &ScalarField,
    u1: &ScalarField,
    cfg: &SolverConfig,
    force: bool,
) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    if !force {
        let report = validate_assumption(spec, grid);
        if !report.all_passed() {
            let failed: Vec<String> = report
                .conditions
                .iter()
                .filter(|c| !c.passed)
                .map(|c| format!("{} ({})", c.name, c.threshold))
                .collect();
            return Err(Error::InvalidArgument(format!(
                "nonlinearity fails structural conditions: {}",
                failed.join(", ")
            )));
        }
    }
    check_field(grid, u0, "initial displacement")?;
    check_field(grid, u1, "initial velocity")?;
    check_spacetime(grid, h, "source")?;
    interior_loads(mask, h, "source")
}

/// Solves `u'' + P A P u + f(x, u) + g(x, u_t) = h` with zero exterior values.
/// Rejects nonlinearities whose validation report has failures.
pub fn solve_nonlinear(
    grid: &Grid,
    mask: &RegionMask,
    spec: &NonlinearitySpec,
    h: &SpaceTimeField,
    u0: &ScalarField,
    u1: &ScalarField,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    nonlinear_entry(grid, mask, spec, h, u0, u1, cfg, false)
}

/// As [`solve_nonlinear`] but skips the structural validation.
pub fn solve_nonlinear_forced(
    grid: &Grid,
    mask: &RegionMask,
    spec: &NonlinearitySpec,
    h: &SpaceTimeField,
    u0: &ScalarField,
    u1: &ScalarField,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    nonlinear_entry(grid, mask, spec, h, u0, u1, cfg, true)
}

#[allow(clippy::too_many_arguments)]
fn nonlinear_entry(
    grid: &Grid,
    mask: &RegionMask,
    spec: &NonlinearitySpec,
    h: &SpaceTimeField,
    u0: &ScalarField,
    u1: &ScalarField,
    cfg: &SolverConfig,
    force: bool,
) -> Result<Trajectory> {
    let source = check_nonlinear_inputs(grid, mask, spec, h, u0, u1, cfg, force)?;
    check_interior(mask, u0.values(), "initial displacement")?;
    check_interior(mask, u1.values(), "initial velocity")?;
    let (states, log, slabs) =
        nonlinear_core(grid, mask, spec, &source, u0.values(), u1.values(), cfg)?;
    Ok(assemble(states, log, slabs))
}

/// Second-order discrete time derivative of every node.
fn time_derivative(grid: &Grid, f: &SpaceTimeField) -> Vec<Vec<f64>> {
    let dt = grid.dt();
    let last = grid.steps();
    let fr = |k: usize| f.frame(k).values();
    (0..=last)
        .map(|k| {
            (0..grid.len())
                .map(|i| {
                    if k == 0 {
                        (-3.0 * fr(0)[i] + 4.0 * fr(1)[i] - fr(2)[i]) / (2.0 * dt)
                    } else if k == last {
                        (3.0 * fr(last)[i] - 4.0 * fr(last - 1)[i] + fr(last - 2)[i]) / (2.0 * dt)
                    } else {
                        (fr(k + 1)[i] - fr(k - 1)[i]) / (2.0 * dt)
                    }
                })
                .collect()
        })
        .collect()
}

/// Exterior entries of `data` must vanish or equal `exterior` exactly.
fn check_compatible(
    mask: &RegionMask,
    data: &[f64],
    exterior: &[f64],
    context: &str,
) -> Result<()> {
    let outside = || {
        data.iter()
            .zip(exterior)
            .zip(mask.omega())
            .filter(|(_, &inside)| !inside)
    };
    let all_zero = outside().all(|((&d, _), _)| d == 0.0);
    let all_match = outside().all(|((&d, &e), _)| d == e);
    if all_zero || all_match {
        Ok(())
    } else {
        Err(Error::Support(format!(
            "{context} disagrees with the exterior data off the interior"
        )))
    }
}

/// Solves with exterior values `u = phi` off the interior by lifting: the
/// interior part `v = u - phi` solves the zero-exterior problem with source
/// `h - P (-Delta)^s phi` (the `phi_tt` term vanishes on the interior). The
/// interior of `u0`, `u1` is the initial data; their exterior entries must be
/// zero or already agree with `phi(0)` and its discrete time derivative.
#[allow(clippy::too_many_arguments)]
pub fn solve_with_exterior(
    grid: &Grid,
    mask: &RegionMask,
    spec: &NonlinearitySpec,
    h: &SpaceTimeField,
    u0: &ScalarField,
    u1: &ScalarField,
    phi: &SpaceTimeField,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    check_spacetime(grid, phi, "exterior data")?;
    for (k, frame) in phi.frames().iter().enumerate() {
        if let Some(i) = mask
            .omega_nodes()
            .iter()
            .copied()
            .find(|&i| frame.values()[i] != 0.0)
        {
            return Err(Error::Support(format!(
                "exterior data overlaps the interior at level {k}, node {i}"
            )));
        }
    }
    let mut source = check_nonlinear_inputs(grid, mask, spec, h, u0, u1, cfg, false)?;
    let phi_t = time_derivative(grid, phi);
    check_compatible(
        mask,
        u0.values(),
        phi.frame(0).values(),
        "initial displacement",
    )?;
    check_compatible(mask, u1.values(), &phi_t[0], "initial velocity")?;

    if phi.max_abs() > 0.0 {
        for (load, frame) in source.iter_mut().zip(phi.frames()) {
            let lifted = grid.frac_vec(frame.values(), grid.order());
            for &i in mask.omega_nodes() {
                load[i] -= lifted[i];
            }
        }
    }
    let v0 = mask.project_omega(u0);
    let v1 = mask.project_omega(u1);
    let (mut states, log, slabs) =
        nonlinear_core(grid, mask, spec, &source, v0.values(), v1.values(), cfg)?;
    let omega = mask.omega();
    for (k, s) in states.iter_mut().enumerate() {
        let frame = phi.frame(k).values();
        for i in 0..grid.len() {
            if !omega[i] {
                s.u[i] = frame[i];
                s.v[i] = phi_t[k][i];
            }
        }
    }
    Ok(assemble(states, log, slabs))
}
