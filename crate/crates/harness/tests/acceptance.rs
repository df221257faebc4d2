//! Acceptance suite: twelve closed-loop criteria at desk scale (1D, N = 256,
//! 512 steps, T = 1). Prints one line per criterion and exits nonzero when
//! any criterion fails. Runs without the libtest harness so the lines are
//! always visible.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use fracwave::dnmap::{measure, ExteriorInput};
use fracwave::forward::{
    max_step_residual, nemytskii_modulus, solve_linear, solve_with_exterior, NonlinearitySpec, SolverConfig,
};
use fracwave::inverse::{
    directional_check, fit_line, integration_by_parts_mismatch, linearization_probe, regularization_gap,
    InitialDataProblem, RungeObjective, SourceProblem,
};
use fracwave::lattice::{
    hs_tilde_norm, sup_hs, sup_l2, Grid, GridParams, Region, RegionMask, ScalarField, SpaceTimeField,
};
use fracwave_harness::run::{run, Experiment, Setup};
use fracwave_harness::Scenario;

type Outcome = Result<(bool, String), String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn scenario(name: &str) -> Scenario {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name);
    Scenario::from_file(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn bump(g: &Grid, m: &RegionMask, center: f64, width: f64, amplitude: f64) -> ScalarField {
    m.project_omega(&ScalarField::from_fn(g, |x| {
        let r = (x[0] - center) / width;
        if r.abs() < 1.0 {
            amplitude * (1.0 - r * r).powi(3)
        } else {
            0.0
        }
    }))
}

fn reference() -> Result<(Scenario, Setup), String> {
    let s = scenario("reference.scn");
    let setup = Setup::new(&s).map_err(err)?;
    Ok((s, setup))
}

fn summary_f64(summary: &Value, key: &str) -> f64 {
    summary[key].as_f64().unwrap_or(f64::NAN)
}

fn c1_spectral_exactness() -> Outcome {
    let mut errors = Vec::new();
    for dt in [4e-3f64, 2e-3, 1e-3] {
        let steps = (1.0 / dt).round() as usize;
        let g = Grid::new(GridParams {
            dim: 1,
            points: 256,
            box_length: 4.0,
            order: 0.75,
            dt,
            steps,
        })
        .map_err(err)?;
        let m = RegionMask::full_torus(&g);
        let k = 2.0 * PI / g.box_length();
        let omega = k.powf(g.order());
        let mode = ScalarField::from_fn(&g, |x| (k * x[0]).cos());
        let zero = ScalarField::zeros(&g);
        let traj = solve_linear(&g, &m, &zero, &SpaceTimeField::zeros(&g), &mode, &zero, &SolverConfig::default())
            .map_err(err)?;
        let exact = SpaceTimeField::from_fn(&g, |x, t| (omega * t).cos() * (k * x[0]).cos());
        errors.push(sup_l2(&g, &traj.u.sub(&exact), Region::All) / sup_l2(&g, &exact, Region::All));
    }
    let logs_dt: Vec<f64> = [4e-3f64, 2e-3, 1e-3].iter().map(|d| d.ln()).collect();
    let logs_err: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let (slope, _, _) = fit_line(&logs_dt, &logs_err);
    let pass = errors[2] <= 1e-3 && (slope - 2.0).abs() <= 0.1;
    Ok((pass, format!("error at dt=1e-3 {:.3e} (<= 1e-3), dt slope {slope:.3} (2 +- 0.1)", errors[2])))
}

fn c2_energy_identity() -> Outcome {
    let (_, s) = reference()?;
    let (g, m, cfg) = (&s.grid, &s.mask, &s.cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let q = bump(g, m, 0.1, 0.4, rng.random_range(0.5..2.0)).add(&m.project_omega(&ScalarField::constant(g, 0.5)));
    let u0 = bump(g, m, rng.random_range(-0.1..0.1), 0.4, rng.random_range(0.5..1.5));
    let u1 = bump(g, m, rng.random_range(-0.1..0.1), 0.35, rng.random_range(-1.0..1.0));
    let traj = solve_linear(g, m, &q, &SpaceTimeField::zeros(g), &u0, &u1, cfg).map_err(err)?;
    let drift = max_step_residual(&traj.energy_log);

    let fine = g.with_time(1e-3, 1000).map_err(err)?;
    let mut residuals = Vec::new();
    for r in [0.5, 1.0] {
        let spec = NonlinearitySpec::power(&fine, bump(&fine, m, 0.0, 0.45, 1.0), r).map_err(err)?;
        let zero_h = SpaceTimeField::zeros(&fine);
        let traj = solve_with_exterior(&fine, m, &spec, &zero_h, &u0, &u1, &zero_h, cfg).map_err(err)?;
        let scale = traj.energy_log.iter().map(|e| e.total().abs()).fold(0.0, f64::max);
        let worst = traj.energy_log.iter().map(|e| e.residual.abs()).fold(0.0, f64::max);
        residuals.push(worst / scale);
    }
    let pass = drift <= 1e-8 && residuals.iter().all(|&r| r <= 1e-4);
    Ok((pass, format!("linear drift {drift:.2e} (<= 1e-8), nonlinear residuals r=0.5,1: {residuals:?} (<= 1e-4)")))
}

fn c3_continuity() -> Outcome {
    let (_, s) = reference()?;
    let (g, m, cfg) = (&s.grid, &s.mask, &s.cfg);
    let zero_h = SpaceTimeField::zeros(g);
    let u0 = bump(g, m, 0.0, 0.4, 0.8);
    let u1 = bump(g, m, 0.05, 0.35, 0.2);
    let direction = m.project_omega(&ScalarField::from_fn(g, |x| (PI * x[0]).cos()));
    let base = solve_with_exterior(g, m, &s.spec, &zero_h, &u0, &u1, &zero_h, cfg).map_err(err)?;
    let mut ratios = Vec::new();
    for delta in [1e-1, 1e-2, 1e-3, 1e-4] {
        let mut p0 = u0.clone();
        p0.axpy(delta, &direction);
        let other = solve_with_exterior(g, m, &s.spec, &zero_h, &p0, &u1, &zero_h, cfg).map_err(err)?;
        ratios.push(sup_hs(g, &other.u.sub(&base.u)) / (delta * hs_tilde_norm(g, &direction)));
    }
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((hi / lo <= 2.0, format!("ratios {ratios:.4?}, variation {:.4} (<= 2)", hi / lo)))
}

fn c4_contraction() -> Outcome {
    let (sc, s) = reference()?;
    let (g, m) = (&s.grid, &s.mask);
    let phi = sc.input(g, m).map_err(err)?.data();
    let u0 = bump(g, m, 0.0, 0.4, 1.0);
    let zero = ScalarField::zeros(g);
    let traj = solve_with_exterior(g, m, &s.spec, &SpaceTimeField::zeros(g), &u0, &zero, &phi, &s.cfg).map_err(err)?;
    let mut ratios: Vec<f64> = traj.picard_log.iter().filter(|r| r.converged).map(|r| r.max_ratio).collect();
    let below_one = !ratios.is_empty() && ratios.iter().all(|&r| r < 1.0);
    ratios.sort_by(f64::total_cmp);
    let median = ratios.get(ratios.len() / 2).copied().unwrap_or(f64::NAN);
    Ok((
        below_one && median <= 0.5,
        format!("{} converged slabs, all < 1: {below_one}, median ratio {median:.3e} (<= 0.5)", ratios.len()),
    ))
}

fn c5_remainder_scaling() -> Outcome {
    let (sc, s) = reference()?;
    let (g, m) = (&s.grid, &s.mask);
    let input = sc.input(g, m).map_err(err)?;
    let mut pass = true;
    let mut parts = Vec::new();
    for r in [0.25, 0.5, 1.0] {
        let spec = NonlinearitySpec::power(g, bump(g, m, 0.0, 0.45, 1.0), r).map_err(err)?;
        let probe = linearization_probe(g, m, &spec, &input, &[0.2, 0.1, 0.05, 0.025], &s.cfg).map_err(err)?;
        let slope = probe.fitted_slope.unwrap_or(f64::NAN);
        pass &= (slope - (r + 1.0)).abs() <= 0.1;
        parts.push(format!("r={r}: {slope:.4}"));
    }
    Ok((pass, format!("slopes {} (r+1 +- 0.1)", parts.join(", "))))
}

fn c6_runge(out: &Path) -> Outcome {
    let sc = scenario("reference.scn");
    let manifest = run(Experiment::Runge, &sc, out).map_err(err)?;
    let errors: Vec<f64> = manifest.summary["sweep"]
        .as_array()
        .ok_or("runge summary lacks the sweep")?
        .iter()
        .map(|row| summary_f64(row, "achieved_error"))
        .collect();
    let best = errors.iter().copied().fold(f64::INFINITY, f64::min);
    let decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    Ok((
        best <= 0.05 && decreasing,
        format!("sweep errors {errors:.4?}, best {best:.4} (<= 0.05), decreasing: {decreasing}"),
    ))
}

fn worst_gradient_error(eval: impl Fn(&[f64]) -> fracwave::Result<(f64, Vec<f64>)>, dim: usize, seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-0.5..0.5)).collect();
    let h = 1e-4 * x.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let d: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        let d: Vec<f64> = d.into_iter().map(|v| v / n).collect();
        worst = worst.max(directional_check(&eval, &x, &d, h).map_err(err)?.relative_error);
    }
    Ok(worst)
}

fn c7_adjoint() -> Outcome {
    let (sc, s) = reference()?;
    let (g, m, cfg) = (&s.grid, &s.mask, &s.cfg);
    let zero = ScalarField::zeros(g);
    let target = sc.runge_target(g, m);
    let runge = RungeObjective::new(g, m, &zero, &target, 1e-4, cfg).map_err(err)?;
    let e_runge = worst_gradient_error(|c| runge.evaluate(c), runge.dim(), 70)?;

    let passive = ExteriorInput::passive(g, "passive");
    let observed = measure(g, m, &NonlinearitySpec::zero(), &bump(g, m, 0.1, 0.3, 0.3), &zero, &passive, cfg)
        .map_err(err)?
        .trace;
    let weight = SpaceTimeField::separable(g, &bump(g, m, 0.0, 0.4, 1.0), |t| 1.0 + t);
    let source = SourceProblem::new(g, m, &zero, &[(weight, observed)], cfg).map_err(err)?;
    let e_source = worst_gradient_error(|x| source.objective(x, 1e-3), source.dim(), 71)?;

    let observed = measure(g, m, &s.spec, &bump(g, m, 0.0, 0.4, 0.5), &zero, &passive, cfg).map_err(err)?.trace;
    let initial = InitialDataProblem::new(g, m, &s.spec, &observed, cfg).map_err(err)?;
    let e_initial = worst_gradient_error(|x| initial.objective(x, 1e-3), initial.dim(), 72)?;

    let worst = e_runge.max(e_source).max(e_initial);
    Ok((
        worst <= 1e-5,
        format!("runge {e_runge:.2e}, source {e_source:.2e}, initial data {e_initial:.2e} (<= 1e-5)"),
    ))
}

fn c8_viscous() -> Outcome {
    let (sc, s) = reference()?;
    let (g, m, cfg) = (&s.grid, &s.mask, &s.cfg);
    let zero = ScalarField::zeros(g);
    let input = sc.input(g, m).map_err(err)?;
    let epsilons = [1e-1, 1e-2, 1e-3];
    let gaps = epsilons
        .iter()
        .map(|&eps| regularization_gap(g, m, &zero, &input, eps, cfg))
        .collect::<fracwave::Result<Vec<f64>>>()
        .map_err(err)?;
    let source = SpaceTimeField::separable(g, &bump(g, m, 0.0, 0.4, 1.0), |t| t * (1.0 - t));
    let mismatches = epsilons
        .iter()
        .map(|&eps| integration_by_parts_mismatch(g, m, &zero, &input, &source, eps, cfg).map(|c| c.mismatch))
        .collect::<fracwave::Result<Vec<f64>>>()
        .map_err(err)?;
    let gaps_down = gaps.windows(2).all(|w| w[1] < w[0]);
    // the mismatch is a consistency residual that shrinks as eps grows
    let ibp_down = mismatches[0] < mismatches[1] && mismatches[1] < mismatches[2];
    Ok((
        gaps_down && ibp_down,
        format!("gaps {gaps:?} decreasing: {gaps_down}; ibp mismatch {mismatches:?} decreasing with eps: {ibp_down}"),
    ))
}

fn c9_nonlinearity(out: &Path) -> Outcome {
    let sc = scenario("nonlinearity.scn");
    let clean = run(Experiment::RecoverNonlinearity, &sc, out).map_err(err)?.summary;
    let r = summary_f64(&clean, "r_estimate");
    let q_err = summary_f64(&clean, "f_relative_error");
    let mut noisy_sc = sc.clone();
    noisy_sc.set("noise.level", "0.01").map_err(err)?;
    let noisy = match run(Experiment::RecoverNonlinearity, &noisy_sc, out) {
        Ok(m) => summary_f64(&m.summary, "f_relative_error"),
        Err(e) => return Ok((false, format!("noiseless r_estimate {r:.4}, q error {q_err:.4}; noisy run failed: {e}"))),
    };
    let pass = (r - 1.0).abs() <= 0.05 && q_err <= 0.10 && noisy <= 0.25;
    Ok((
        pass,
        format!("noiseless r_estimate {r:.4} (1 +- 0.05), q error {q_err:.4} (<= 0.10); 1% noise q error {noisy:.4e} (<= 0.25)"),
    ))
}

fn c10_initial(out: &Path) -> Outcome {
    let sc = scenario("initial.scn");
    let summary = run(Experiment::RecoverInitial, &sc, out).map_err(err)?.summary;
    let e0 = summary_f64(&summary, "u0_relative_error");
    let e1 = summary_f64(&summary, "u1_relative_error");

    let s = Setup::new(&sc).map_err(err)?;
    let (g, m) = (&s.grid, &s.mask);
    let passive = ExteriorInput::passive(g, "passive");
    let a = measure(g, m, &s.spec, &s.u0, &s.u1, &passive, &s.cfg).map_err(err)?.trace;
    let other_u0 = bump(g, m, 0.05, 0.35, 1.0);
    let b = measure(g, m, &s.spec, &other_u0, &s.u1, &passive, &s.cfg).map_err(err)?.trace;
    let norm = |f: &SpaceTimeField| f.frames().iter().flat_map(|fr| m.w2_nodes().iter().map(move |&i| fr.values()[i].powi(2))).sum::<f64>().sqrt();
    let gap = norm(&a.sub(&b)) / norm(&a);
    let pass = e0 <= 0.10 && e1 <= 0.10 && gap >= 1e-6;
    Ok((
        pass,
        format!("u0 error {e0:.4}, u1 error {e1:.4} (<= 0.10); passive trace gap {gap:.3e} (>= 1e-6)"),
    ))
}

fn c11_simultaneous(out: &Path) -> Outcome {
    let sc = scenario("potential.scn");
    let summary = run(Experiment::RecoverPotential, &sc, out).map_err(err)?.summary;
    let ea = summary_f64(&summary, "a_relative_error");
    let e0 = summary_f64(&summary, "u0_relative_error");
    let e1 = summary_f64(&summary, "u1_relative_error");
    Ok((
        ea <= 0.10 && e0 <= 0.10 && e1 <= 0.10,
        format!("a error {ea:.4}, u0 error {e0:.4}, u1 error {e1:.4} (each <= 0.10)"),
    ))
}

fn c12_nemytskii() -> Outcome {
    let (_, s) = reference()?;
    let (g, m) = (&s.grid, &s.mask);
    let u = SpaceTimeField::separable(g, &bump(g, m, 0.0, 0.4, 1.0), |t| (2.0 * t).cos());
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let dirs = (0..3)
        .map(|_| {
            let frames = (0..g.levels())
                .map(|_| ScalarField::from_values(g, (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect()))
                .collect::<fracwave::Result<Vec<_>>>()?;
            SpaceTimeField::from_frames(g, frames)
        })
        .collect::<fracwave::Result<Vec<_>>>()
        .map_err(err)?;
    let table = nemytskii_modulus(&s.spec, g, m, &u, &[1e-1, 1e-2, 1e-4, 1e-6, 1e-8], &dirs).map_err(err)?;
    let values: Vec<f64> = table.iter().map(|r| r.value).collect();
    let decreasing = values.windows(2).all(|w| w[1] < w[0]);
    let last = values.last().copied().unwrap_or(f64::NAN);
    Ok((
        decreasing && last < 1e-6,
        format!("modulus {values:?}, strictly decreasing: {decreasing}, at 1e-8 below 1e-6: {}", last < 1e-6),
    ))
}

fn main() {
    let scratch = tempfile::tempdir().expect("temporary output directory");
    let out: PathBuf = scratch.path().to_path_buf();
    let criteria: Vec<Criterion> = vec![
        ("spectral exactness", Box::new(c1_spectral_exactness)),
        ("energy identity", Box::new(c2_energy_identity)),
        ("continuity estimate", Box::new(c3_continuity)),
        ("Picard contraction", Box::new(c4_contraction)),
        ("remainder scaling", Box::new(c5_remainder_scaling)),
        ("Runge control", Box::new(|| c6_runge(&out))),
        ("adjoint gradients", Box::new(c7_adjoint)),
        ("viscous regularization", Box::new(c8_viscous)),
        ("nonlinearity recovery", Box::new(|| c9_nonlinearity(&out))),
        ("initial-data recovery", Box::new(|| c10_initial(&out))),
        ("simultaneous recovery", Box::new(|| c11_simultaneous(&out))),
        ("Nemytskii continuity", Box::new(c12_nemytskii)),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        let status = if pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {status} {name}: {detail} [{:.1}s]", i + 1, start.elapsed().as_secs_f64());
        if !pass {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria pass", criteria.len());
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
