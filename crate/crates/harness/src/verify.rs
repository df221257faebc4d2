//! The invariant suite behind `fracwave verify`: lattice identities, energy
//! and contraction properties of the solvers, DN-map consistency, adjoint
//! gradients, remainder slopes, homogeneity and determinism, plus the
//! harness's own hashing and noise contracts.
//!
//! Checks run on the scenario's lattice and geometry. Each yields one row of
//! `verify.csv` (`suite,name,status,value,threshold,detail`); `status` is
//! `pass`, `fail` or `skip`.

use std::f64::consts::PI;
use std::fmt::Display;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use fracwave::dnmap::{measure, measure_with_pairings, DnOracle, ExteriorInput, SyntheticOracle};
use fracwave::forward::{
    max_step_residual, nemytskii_modulus, solve_linear, solve_viscous, solve_with_exterior, NonlinearityKind,
    NonlinearitySpec, SolverConfig, Trajectory,
};
use fracwave::inverse::{
    directional_check, homogeneity_check, integration_by_parts_mismatch, linearization_probe, recover_initial_data,
    recover_nonlinearity, regularization_gap, runge_sweep, InitialDataProblem, RungeObjective, SourceProblem,
};
use fracwave::lattice::{
    hs_tilde_norm, inner, l2_norm, masked_stiffness, sup_hs, Grid, Region, RegionMask, ScalarField, SpaceTimeField,
};

use crate::error::{HarnessError, Result};
use crate::noise::{add_noise, trace_norm};
use crate::run::{finish, prepare, write_json, Setup};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub suite: String,
    pub name: String,
    pub status: Status,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl Check {
    fn new(suite: &str, name: &str, passed: bool, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self {
            suite: suite.into(),
            name: name.into(),
            status: if passed { Status::Pass } else { Status::Fail },
            value,
            threshold,
            detail: detail.into(),
        }
    }

    /// `value <= threshold`, failing on NaN.
    fn at_most(suite: &str, name: &str, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self::new(suite, name, value <= threshold, value, threshold, detail)
    }

    fn skip(suite: &str, name: &str, why: impl Into<String>) -> Self {
        Self {
            suite: suite.into(),
            name: name.into(),
            status: Status::Skip,
            value: f64::NAN,
            threshold: f64::NAN,
            detail: why.into(),
        }
    }

    fn errored(suite: &str, name: &str, err: impl Display) -> Self {
        Self::new(suite, name, false, f64::NAN, f64::NAN, format!("error: {err}"))
    }
}

/// Runs a check body, turning an error into a failed row.
fn guarded(suite: &str, name: &str, body: impl FnOnce() -> Result<Check>) -> Check {
    body().unwrap_or_else(|e| Check::errored(suite, name, e))
}

struct Ctx<'a> {
    scenario: &'a Scenario,
    setup: &'a Setup,
    seed: u64,
}

impl Ctx<'_> {
    fn grid(&self) -> &Grid {
        &self.setup.grid
    }

    fn mask(&self) -> &RegionMask {
        &self.setup.mask
    }

    fn cfg(&self) -> &SolverConfig {
        &self.setup.cfg
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(stream))
    }

    fn random_field(&self, rng: &mut ChaCha8Rng) -> ScalarField {
        let g = self.grid();
        ScalarField::from_values(g, (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect())
            .expect("length matches the grid")
    }

    /// Smooth bump centered in the interior's bounding box, scaled to its half width.
    fn bump(&self, amplitude: f64, offset: f64) -> ScalarField {
        let g = self.grid();
        let (lo, hi) = self.interior_extent();
        let center = 0.5 * (lo + hi) + offset * (hi - lo);
        let width = 0.4 * (hi - lo);
        self.mask().project_omega(&ScalarField::from_fn(g, |x| {
            let r = (x[0] - center) / width;
            let ry = if g.dim() == 2 { x[1] / width } else { 0.0 };
            let rho2 = r * r + ry * ry;
            if rho2 < 1.0 {
                amplitude * (1.0 - rho2).powi(3)
            } else {
                0.0
            }
        }))
    }

    fn interior_extent(&self) -> (f64, f64) {
        let xs = self.mask().omega_nodes().iter().map(|&i| self.grid().node_coordinates(i)[0]);
        xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
    }

    /// The scenario's power coefficient, or a unit bump when the scenario is not a power law.
    fn power_coefficient(&self) -> ScalarField {
        match self.setup.spec.kind() {
            NonlinearityKind::Power { q, .. } if q.max_abs() > 0.0 => q.clone(),
            _ => self.bump(1.0, 0.0),
        }
    }

    fn power(&self, r: f64) -> Result<NonlinearitySpec> {
        Ok(NonlinearitySpec::power(self.grid(), self.power_coefficient(), r)?)
    }

    fn input(&self) -> Result<ExteriorInput> {
        self.scenario.input(self.grid(), self.mask())
    }
}

fn relative(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale > 0.0 {
        (a - b).abs() / scale
    } else {
        0.0
    }
}

fn lattice_suite(ctx: &Ctx) -> Vec<Check> {
    const S: &str = "lattice";
    let g = ctx.grid();
    let m = ctx.mask();
    let mut rng = ctx.rng(1);
    let u = ctx.random_field(&mut rng);
    let v = ctx.random_field(&mut rng);
    let mut out = Vec::new();

    let spectrum = g.forward_transform(u.values());
    let physical = l2_norm(g, &u, Region::All).powi(2);
    let spectral = spectrum.iter().map(|c| c.norm_sqr()).sum::<f64>() * g.cell_volume() / g.len() as f64;
    out.push(Check::at_most(S, "parseval", relative(physical, spectral), 1e-12, "L2 norm vs DFT energy"));

    let c = -2.5;
    let scaled = u.scaled(c);
    let gap = relative(l2_norm(g, &scaled, Region::All), c.abs() * l2_norm(g, &u, Region::All))
        .max(relative(hs_tilde_norm(g, &scaled), c.abs() * hs_tilde_norm(g, &u)));
    out.push(Check::at_most(S, "norm_homogeneity", gap, 1e-12, "L2 and H^s norms under u -> -2.5 u"));

    out.push(guarded(S, "order_one_multiplier", || {
        let k = 2.0 * PI * 3.0 / g.box_length();
        let mode = ScalarField::from_fn(g, |x| (k * x[0]).cos());
        let applied = g.frac_laplacian(&mode, 1.0)?;
        let err = l2_norm(g, &applied.sub(&mode.scaled(k * k)), Region::All) / l2_norm(g, &mode.scaled(k * k), Region::All);
        Ok(Check::at_most(S, "order_one_multiplier", err, 1e-10, "(-Delta)^1 on cos(2 pi 3 x / L)"))
    }));

    out.push(guarded(S, "stiffness_symmetry", || {
        let pu = m.project_omega(&u);
        let pv = m.project_omega(&v);
        let au = masked_stiffness(g, &pu, m)?;
        let av = masked_stiffness(g, &pv, m)?;
        let omega = m.omega_region();
        let err = relative(inner(g, &au, &pv, omega), inner(g, &pu, &av, omega));
        let positive = inner(g, &au, &pu, omega) > 0.0;
        Ok(Check::new(
            S,
            "stiffness_symmetry",
            err <= 1e-12 && positive,
            err,
            1e-12,
            format!("<Au, v> vs <u, Av>; <Au, u> > 0: {positive}"),
        ))
    }));
    out
}

fn energy_scale(traj: &Trajectory) -> f64 {
    traj.energy_log.iter().map(|r| r.total().abs()).fold(0.0, f64::max)
}

fn forward_suite(ctx: &Ctx) -> Vec<Check> {
    const S: &str = "forward";
    let g = ctx.grid();
    let m = ctx.mask();
    let cfg = ctx.cfg();
    let zero_h = SpaceTimeField::zeros(g);
    let zero = ScalarField::zeros(g);
    let mut out = Vec::new();

    out.push(guarded(S, "linear_energy", || {
        let mut rng = ctx.rng(2);
        let q = ctx.bump(rng.random_range(0.5..2.0), 0.1).add(&m.project_omega(&ScalarField::constant(g, 0.5)));
        let u0 = ctx.bump(rng.random_range(0.5..1.5), rng.random_range(-0.1..0.1));
        let u1 = ctx.bump(rng.random_range(-1.0..1.0), rng.random_range(-0.1..0.1));
        let traj = solve_linear(g, m, &q, &zero_h, &u0, &u1, cfg)?;
        let drift = max_step_residual(&traj.energy_log);
        Ok(Check::at_most(S, "linear_energy", drift, 1e-8, "largest relative energy change per step, q >= 0"))
    }));

    for r in [0.5, 1.0] {
        let name = format!("nonlinear_energy_r{r}");
        out.push(guarded(S, &name, || {
            let steps = (g.final_time() / 1e-3).round().max(1.0) as usize;
            let fine = g.with_time(1e-3, steps)?;
            let spec = NonlinearitySpec::power(&fine, ctx.power_coefficient(), r)?;
            let u0 = ctx.bump(1.0, 0.0);
            let u1 = ctx.bump(0.5, 0.05);
            let traj = solve_with_exterior(
                &fine,
                m,
                &spec,
                &SpaceTimeField::zeros(&fine),
                &u0,
                &u1,
                &SpaceTimeField::zeros(&fine),
                cfg,
            )?;
            let worst = traj.energy_log.iter().map(|e| e.residual.abs()).fold(0.0, f64::max);
            Ok(Check::at_most(S, &name, worst / energy_scale(&traj), 1e-4, "energy identity residual at dt = 1e-3"))
        }));
    }

    out.push(guarded(S, "continuity", || {
        let spec = if ctx.setup.spec.is_zero() { ctx.power(1.0)? } else { ctx.setup.spec.clone() };
        let u0 = ctx.bump(0.8, 0.0);
        let u1 = ctx.bump(0.2, 0.0);
        let direction = m.project_omega(&ScalarField::from_fn(g, |x| (PI * x[0]).cos()));
        let reference = solve_with_exterior(g, m, &spec, &zero_h, &u0, &u1, &zero_h, cfg)?;
        let mut ratios = Vec::new();
        for delta in [1e-1, 1e-2, 1e-3, 1e-4] {
            let mut p0 = u0.clone();
            p0.axpy(delta, &direction);
            let other = solve_with_exterior(g, m, &spec, &zero_h, &p0, &u1, &zero_h, cfg)?;
            ratios.push(sup_hs(g, &other.u.sub(&reference.u)) / (delta * hs_tilde_norm(g, &direction)));
        }
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().copied().fold(0.0, f64::max);
        Ok(Check::at_most(S, "continuity", hi / lo, 2.0, format!("max/min of sup-norm ratios {ratios:.4?}")))
    }));

    out.push(guarded(S, "picard_contraction", || {
        let spec = if matches!(ctx.setup.spec.kind(), NonlinearityKind::Power { .. }) {
            ctx.setup.spec.clone()
        } else {
            ctx.power(1.0)?
        };
        let u0 = if ctx.setup.u0.max_abs() > 0.0 { ctx.setup.u0.clone() } else { ctx.bump(1.0, 0.0) };
        let phi = ctx.input()?.data();
        let traj = solve_with_exterior(g, m, &spec, &zero_h, &u0, &ctx.setup.u1, &phi, cfg)?;
        let converged: Vec<f64> = traj.picard_log.iter().filter(|s| s.converged).map(|s| s.max_ratio).collect();
        let all_below_one = !converged.is_empty() && converged.iter().all(|&r| r < 1.0);
        let mut sorted = converged.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted.get(sorted.len() / 2).copied().unwrap_or(f64::NAN);
        Ok(Check::new(
            S,
            "picard_contraction",
            all_below_one && median <= 0.5,
            median,
            0.5,
            format!("{} converged slabs, every ratio < 1: {all_below_one}", converged.len()),
        ))
    }));

    out.push(guarded(S, "time_reversal", || {
        let u0 = ctx.bump(0.5, 0.0);
        let u1 = ctx.bump(-0.4, 0.05);
        let fwd = solve_linear(g, m, &zero, &zero_h, &u0, &u1, cfg)?;
        let last = g.steps();
        let back = solve_viscous(g, m, &zero, &zero_h, fwd.u.frame(last), fwd.ut.frame(last), 0.0, cfg, true)?;
        let e0 = l2_norm(g, &back.u.frame(0).sub(&u0), Region::All) / l2_norm(g, &u0, Region::All);
        let e1 = l2_norm(g, &back.ut.frame(0).sub(&u1), Region::All) / l2_norm(g, &u1, Region::All);
        let dt2 = g.dt() * g.dt();
        Ok(Check::at_most(S, "time_reversal", e0.max(e1), dt2, "backward solve from (u(T), u_t(T)) against dt^2"))
    }));

    out.push(guarded(S, "nemytskii_modulus", || {
        let spec = ctx.power(1.0)?;
        let u = SpaceTimeField::separable(g, &ctx.bump(1.0, 0.0), |t| (2.0 * t).cos());
        let mut rng = ctx.rng(3);
        let dirs: Vec<SpaceTimeField> = (0..3)
            .map(|_| {
                let frames = (0..g.levels()).map(|_| ctx.random_field(&mut rng)).collect();
                SpaceTimeField::from_frames(g, frames)
            })
            .collect::<fracwave::Result<_>>()?;
        let deltas = [1e-1, 1e-2, 1e-4, 1e-6, 1e-8];
        let table = nemytskii_modulus(&spec, g, m, &u, &deltas, &dirs)?;
        let decreasing = table.windows(2).all(|w| w[1].value < w[0].value);
        let last = table.last().map(|r| r.value).unwrap_or(f64::NAN);
        Ok(Check::new(
            S,
            "nemytskii_modulus",
            decreasing && last < 1e-6,
            last,
            1e-6,
            format!("strictly decreasing: {decreasing}"),
        ))
    }));

    out.push(guarded(S, "viscous_gap", || {
        let input = ctx.input()?;
        let gaps = [1e-1, 1e-2, 1e-3]
            .iter()
            .map(|&eps| regularization_gap(g, m, &zero, &input, eps, cfg))
            .collect::<fracwave::Result<Vec<_>>>()?;
        let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
        Ok(Check::new(S, "viscous_gap", decreasing, gaps[2], f64::NAN, format!("gaps at eps 1e-1, 1e-2, 1e-3: {gaps:?}")))
    }));

    out.push(guarded(S, "viscous_ibp", || {
        let input = ctx.input()?;
        let source = SpaceTimeField::separable(g, &ctx.bump(1.0, 0.0), |t| t * (1.0 - t));
        let a = integration_by_parts_mismatch(g, m, &zero, &input, &source, 1e-2, cfg)?;
        let b = integration_by_parts_mismatch(g, m, &zero, &input, &source, 1e-3, cfg)?;
        Ok(Check::new(
            S,
            "viscous_ibp",
            a.mismatch < b.mismatch,
            a.mismatch,
            b.mismatch,
            format!("mismatch at eps 1e-2 ({:.3e}) below mismatch at eps 1e-3 ({:.3e})", a.mismatch, b.mismatch),
        ))
    }));
    out
}

fn dnmap_suite(ctx: &Ctx) -> Vec<Check> {
    const S: &str = "dnmap";
    let g = ctx.grid();
    let m = ctx.mask();
    let cfg = ctx.cfg();
    let zero = ScalarField::zeros(g);
    let mut out = Vec::new();

    out.push(guarded(S, "pairing_equality", || {
        let spec = if ctx.setup.spec.is_zero() { ctx.power(1.0)? } else { ctx.setup.spec.clone() };
        let basis: Vec<SpaceTimeField> = [0.0, 0.7]
            .iter()
            .map(|&shift| {
                let shape = ScalarField::from_fn(g, |x| (3.0 * x[0] + shift).sin()).restricted(m.w2());
                SpaceTimeField::separable(g, &shape, |t| (t + shift).cos())
            })
            .collect();
        let rec = measure_with_pairings(g, m, &spec, &ctx.bump(0.5, 0.0), &zero, &ctx.input()?, &basis, cfg)?;
        Ok(Check::at_most(S, "pairing_equality", rec.pairing_mismatch(g, m)?, 1e-8, "split form vs trace pairing"))
    }));

    out.push(guarded(S, "passive_w1_independence", || {
        let keep: Vec<bool> = (0..g.len())
            .map(|i| m.w1()[i] && g.node_coordinates(i)[0] < 0.0)
            .collect();
        let w1 = if keep.iter().filter(|&&b| b).count() >= 2 { keep } else { m.w1().to_vec() };
        let other = RegionMask::from_indicators(g, m.omega().to_vec(), w1, m.w2().to_vec())?;
        let spec = &ctx.setup.spec;
        let u0 = ctx.bump(1.0, 0.0);
        let a = measure(g, m, spec, &u0, &zero, &ExteriorInput::passive(g, "p"), cfg)?;
        let b = measure(g, &other, spec, &u0, &zero, &ExteriorInput::passive(g, "p"), cfg)?;
        let gap = a.trace.sub(&b.trace).max_abs();
        Ok(Check::at_most(S, "passive_w1_independence", gap, 0.0, "passive traces under two control windows"))
    }));

    out.push(guarded(S, "linear_scaling", || {
        let spec = NonlinearitySpec::zero();
        let input = ctx.input()?;
        let a = measure(g, m, &spec, &zero, &zero, &input, cfg)?;
        let b = measure(g, m, &spec, &zero, &zero, &input.rescaled(0.01, "small"), cfg)?;
        let gap = trace_norm(&b.trace.sub(&a.trace.scaled(0.01)), m) / trace_norm(&b.trace, m);
        Ok(Check::at_most(S, "linear_scaling", gap, 1e-9, "trace(0.01 phi) vs 0.01 trace(phi) for f = 0"))
    }));
    out
}

/// Five random unit directions in `dim` coordinates.
fn directions(ctx: &Ctx, stream: u64, dim: usize) -> Vec<Vec<f64>> {
    let mut rng = ctx.rng(stream);
    (0..5)
        .map(|_| {
            let d: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            d.into_iter().map(|v| v / n).collect()
        })
        .collect()
}

fn gradient_row(name: &str, eval: impl Fn(&[f64]) -> fracwave::Result<(f64, Vec<f64>)>, x: &[f64], dirs: &[Vec<f64>]) -> Result<Check> {
    let scale = x.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
    let mut worst: f64 = 0.0;
    for d in dirs {
        let c = directional_check(&eval, x, d, 1e-4 * scale)?;
        worst = worst.max(c.relative_error);
    }
    Ok(Check::at_most("inverse", name, worst, 1e-5, "worst of 5 random directions, central differences"))
}

fn inverse_suite(ctx: &Ctx) -> Vec<Check> {
    const S: &str = "inverse";
    let g = ctx.grid();
    let m = ctx.mask();
    let cfg = ctx.cfg();
    let scenario = ctx.scenario;
    let zero = ScalarField::zeros(g);
    let mut out = Vec::new();

    for r in [0.25, 0.5, 1.0] {
        let name = format!("probe_slope_r{r}");
        out.push(guarded(S, &name, || {
            let result = linearization_probe(g, m, &ctx.power(r)?, &ctx.input()?, &scenario.reals("probe.epsilons"), cfg)?;
            let slope = result.fitted_slope.unwrap_or(f64::NAN);
            Ok(Check::at_most(S, &name, (slope - (r + 1.0)).abs(), 0.1, format!("fitted slope {slope:.4}, expected {}", r + 1.0)))
        }));
    }

    let q = ctx.setup.spec.as_linear_potential().cloned().unwrap_or_else(|| zero.clone());
    let target = scenario.runge_target(g, m);
    out.push(guarded(S, "runge_monotone", || {
        let outcomes = runge_sweep(
            &target,
            &scenario.reals("runge.alphas"),
            scenario.int("runge.iters"),
            scenario.real("runge.grad_tol"),
            g,
            m,
            &q,
            cfg,
        )?;
        let errors: Vec<f64> = outcomes.iter().map(|o| o.achieved_error).collect();
        let monotone = errors.windows(2).all(|w| w[1] <= w[0]);
        Ok(Check::new(
            S,
            "runge_monotone",
            monotone,
            errors.last().copied().unwrap_or(f64::NAN),
            f64::NAN,
            format!("errors along the sweep {errors:.4?}"),
        ))
    }));

    out.push(guarded(S, "gradient_runge", || {
        let objective = RungeObjective::new(g, m, &q, &target, 1e-4, cfg)?;
        let mut rng = ctx.rng(10);
        let x: Vec<f64> = (0..objective.dim()).map(|_| rng.random_range(-0.5..0.5)).collect();
        gradient_row("gradient_runge", |c| objective.evaluate(c), &x, &directions(ctx, 11, objective.dim()))
    }));

    out.push(guarded(S, "gradient_source", || {
        let weight = SpaceTimeField::separable(g, &ctx.bump(1.0, 0.0), |t| 1.0 + t);
        let observed = measure(g, m, &NonlinearitySpec::zero(), &ctx.bump(0.3, 0.1), &zero, &ExteriorInput::passive(g, "p"), cfg)?.trace;
        let problem = SourceProblem::new(g, m, &q, &[(weight, observed)], cfg)?;
        let mut rng = ctx.rng(12);
        let x: Vec<f64> = (0..problem.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        gradient_row("gradient_source", |c| problem.objective(c, 1e-3), &x, &directions(ctx, 13, problem.dim()))
    }));

    out.push(guarded(S, "gradient_initial", || {
        let spec = ctx.power(1.0)?;
        let observed = measure(g, m, &spec, &ctx.bump(0.5, 0.0), &zero, &ExteriorInput::passive(g, "p"), cfg)?.trace;
        let problem = InitialDataProblem::new(g, m, &spec, &observed, cfg)?;
        let mut rng = ctx.rng(14);
        let x: Vec<f64> = (0..problem.dim()).map(|_| rng.random_range(-0.3..0.3)).collect();
        gradient_row("gradient_initial", |c| problem.objective(c, 1e-3), &x, &directions(ctx, 15, problem.dim()))
    }));

    out.extend(homogeneity(ctx));

    out.push(guarded(S, "determinism", || {
        let spec = NonlinearitySpec::zero();
        let passive = measure(g, m, &spec, &ctx.bump(1.0, 0.0), &zero, &ExteriorInput::passive(g, "p"), cfg)?;
        let alpha = scenario.real("initial_data.alpha");
        let a = recover_initial_data(&passive, g, m, &spec, alpha, cfg)?;
        let b = recover_initial_data(&passive, g, m, &spec, alpha, cfg)?;
        let identical = a.u0 == b.u0 && a.u1 == b.u1;
        Ok(Check::new(S, "determinism", identical, a.u0.sub(&b.u0).max_abs(), 0.0, "two initial-data reconstructions, bitwise"))
    }));
    out
}

/// Direct reconstructions at amplitude scales +-2 against the homogeneous
/// extension of the reconstruction at scale 1.
fn homogeneity(ctx: &Ctx) -> Vec<Check> {
    const S: &str = "inverse";
    let names = ["homogeneity_tau2", "homogeneity_tau-2"];
    if !matches!(ctx.setup.spec.kind(), NonlinearityKind::Power { .. }) || ctx.setup.spec.damping().is_some() {
        return names.iter().map(|n| Check::skip(S, n, "scenario nonlinearity is not an undamped power law")).collect();
    }
    let prepared = (|| -> Result<_> {
        let s = ctx.setup;
        let oracle = SyntheticOracle::new(s.grid.clone(), s.mask.clone(), s.spec.clone(), s.u0.clone(), s.u1.clone(), s.cfg)?;
        let settings = ctx.scenario.recovery_settings();
        let result = recover_nonlinearity(&oracle, ctx.scenario.opt_real("recovery.r_known"), &settings, &s.cfg)?;
        Ok((oracle, settings, result))
    })();
    let (oracle, settings, result) = match prepared {
        Ok(p) => p,
        Err(e) => return names.iter().map(|n| Check::errored(S, n, &e)).collect(),
    };
    [2.0, -2.0]
        .iter()
        .zip(names)
        .map(|(&tau, name)| {
            guarded(S, name, || {
                let row = homogeneity_check(&oracle as &dyn DnOracle, &result, tau, &settings, ctx.cfg())?;
                Ok(Check::at_most(S, name, row.relative_gap, 0.1, format!("relative alpha {:e}", row.relative_alpha)))
            })
        })
        .collect()
}

fn harness_suite(ctx: &Ctx) -> Vec<Check> {
    const S: &str = "harness";
    let mut out = Vec::new();
    out.push(guarded(S, "hash_canonical", || {
        let text = ctx.scenario.canonical_text();
        let shuffled: String = text.lines().rev().map(|l| format!("   {}  # comment\n\n", l.replacen(" = ", "=", 1))).collect();
        let same = Scenario::parse(&shuffled)?.hash() == ctx.scenario.hash();
        let mut changed = Scenario::parse(&text)?;
        changed.set("seed", &(ctx.scenario.seed().wrapping_add(1)).to_string())?;
        let differs = changed.hash() != ctx.scenario.hash();
        Ok(Check::new(S, "hash_canonical", same && differs, 0.0, 0.0, format!("reordered equal: {same}; edited differs: {differs}")))
    }));
    out.push(guarded(S, "noise", || {
        let g = ctx.grid();
        let m = ctx.mask();
        let record = measure(g, m, &NonlinearitySpec::zero(), &ctx.bump(1.0, 0.0), &ScalarField::zeros(g), &ExteriorInput::passive(g, "p"), ctx.cfg())?;
        let identity = add_noise(&record, m, 0.0, 1).trace == record.trace;
        let a = add_noise(&record, m, 0.01, ctx.seed);
        let reproducible = a.trace == add_noise(&record, m, 0.01, ctx.seed).trace;
        let ratio = trace_norm(&a.trace.sub(&record.trace), m) / trace_norm(&record.trace, m) / 0.01;
        let pass = identity && reproducible && (ratio - 1.0).abs() <= 0.05;
        Ok(Check::new(S, "noise", pass, ratio, 0.05, format!("level 0 identity: {identity}; seeded: {reproducible}; norm ratio / level")))
    }));
    out
}

/// Runs every suite and returns the rows in suite order.
pub fn run_checks(scenario: &Scenario) -> Result<Vec<Check>> {
    let setup = Setup::new(scenario)?;
    let ctx = Ctx {
        scenario,
        setup: &setup,
        seed: scenario.seed(),
    };
    let mut rows = lattice_suite(&ctx);
    rows.extend(forward_suite(&ctx));
    rows.extend(dnmap_suite(&ctx));
    rows.extend(inverse_suite(&ctx));
    rows.extend(harness_suite(&ctx));
    Ok(rows)
}

#[derive(Serialize)]
struct CsvRow<'a> {
    suite: &'a str,
    name: &'a str,
    status: Status,
    value: f64,
    threshold: f64,
    detail: &'a str,
}

/// `fracwave verify`: writes `verify.json`, `verify.csv` and the manifest,
/// and fails with exit code 3 when any check fails.
pub fn verify(scenario: &Scenario, out: &Path) -> Result<(PathBuf, Vec<Check>)> {
    let dir = prepare(out, scenario, "verify")?;
    let rows = run_checks(scenario)?;
    write_json(&dir.join("verify.json"), &rows)?;
    let csv_rows: Vec<CsvRow> = rows
        .iter()
        .map(|c| CsvRow {
            suite: &c.suite,
            name: &c.name,
            status: c.status,
            value: c.value,
            threshold: c.threshold,
            detail: &c.detail,
        })
        .collect();
    fracwave::inverse::io::write_rows(&dir.join("verify.csv"), &csv_rows)?;
    let failed: Vec<String> = rows.iter().filter(|c| c.status == Status::Fail).map(|c| format!("{}/{}", c.suite, c.name)).collect();
    let summary = serde_json::json!({
        "checks": rows.len(),
        "passed": rows.iter().filter(|c| c.status == Status::Pass).count(),
        "skipped": rows.iter().filter(|c| c.status == Status::Skip).count(),
        "failed": failed,
    });
    finish(&dir, scenario, "verify", summary)?;
    if failed.is_empty() {
        Ok((dir, rows))
    } else {
        Err(HarnessError::VerifyFailed(failed.join(", ")))
    }
}
