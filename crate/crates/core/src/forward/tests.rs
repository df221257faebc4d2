use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;
use crate::lattice::{
    cg_solve, hs_tilde_norm, inner, l2_norm, masked_stiffness, sup_hs, sup_l2, AxisBox, Grid,
    GridParams, Region, RegionMask, ScalarField, SpaceTimeField,
};

fn grid_with(points: usize, dt: f64, steps: usize) -> Grid {
    Grid::new(GridParams {
        dim: 1,
        points,
        box_length: 4.0,
        order: 0.75,
        dt,
        steps,
    })
    .unwrap()
}

fn mask_for(g: &Grid) -> RegionMask {
    RegionMask::from_boxes(
        g,
        &[AxisBox::interval(-0.5, 0.5)],
        &[AxisBox::interval(-1.25, -0.5625)],
        &[AxisBox::interval(0.5625, 1.25)],
    )
    .unwrap()
}

fn setup() -> (Grid, RegionMask) {
    let g = grid_with(64, 1.0 / 128.0, 128);
    let m = mask_for(&g);
    (g, m)
}

/// Smooth bump vanishing outside the interior.
fn bump(g: &Grid, m: &RegionMask, amp: f64) -> ScalarField {
    let f = ScalarField::from_fn(g, |x| {
        let r = x[0] / 0.5;
        if r.abs() < 1.0 {
            amp * (1.0 - r * r).powi(3)
        } else {
            0.0
        }
    });
    m.project_omega(&f)
}

fn random_field(g: &Grid, rng: &mut ChaCha8Rng) -> ScalarField {
    ScalarField::from_values(
        g,
        (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

fn cfg() -> SolverConfig {
    SolverConfig::default()
}

/// Energy `||u_t||^2 + ||u||_{H^s}^2 + <q u, u>` recomputed from the public norms.
fn direct_energy(
    g: &Grid,
    m: &RegionMask,
    q: &ScalarField,
    traj: &Trajectory,
    level: usize,
) -> f64 {
    let u = traj.u.frame(level);
    let ut = traj.ut.frame(level);
    let qu = u.zip_map(q, |a, b| a * b);
    l2_norm(g, ut, m.omega_region()).powi(2)
        + hs_tilde_norm(g, u).powi(2)
        + inner(g, &qu, u, m.omega_region())
}

#[test]
fn zero_data_gives_zero_trajectory() {
    let (g, m) = setup();
    let z = ScalarField::zeros(&g);
    let traj = solve_linear(&g, &m, &z, &SpaceTimeField::zeros(&g), &z, &z, &cfg()).unwrap();
    assert_eq!(traj.u.max_abs(), 0.0);
    assert_eq!(traj.ut.max_abs(), 0.0);
}

#[test]
fn single_mode_matches_closed_form_at_second_order() {
    let errors: Vec<(f64, f64)> = [64usize, 128]
        .iter()
        .map(|&steps| {
            let dt = 1.0 / steps as f64;
            let g = grid_with(32, dt, steps);
            let m = RegionMask::full_torus(&g);
            let l = g.box_length();
            let u0 = ScalarField::from_fn(&g, |x| (2.0 * PI * x[0] / l).cos());
            let z = ScalarField::zeros(&g);
            let traj =
                solve_linear(&g, &m, &z, &SpaceTimeField::zeros(&g), &u0, &z, &cfg()).unwrap();
            let omega = (2.0 * PI / l).powf(g.order());
            let exact =
                SpaceTimeField::from_fn(&g, |x, t| (omega * t).cos() * (2.0 * PI * x[0] / l).cos());
            let err =
                sup_l2(&g, &traj.u.sub(&exact), Region::All) / sup_l2(&g, &exact, Region::All);
            (dt, err)
        })
        .collect();
    let omega = (2.0 * PI / 4.0f64).powf(0.75);
    // phase error of the trapezoidal rule: T omega^3 dt^2 / 12
    for &(dt, err) in &errors {
        assert!(
            err <= 2.0 * omega.powi(3) * dt * dt / 12.0,
            "dt {dt}: {err}"
        );
    }
    let rate = errors[0].1 / errors[1].1;
    assert!((3.5..4.5).contains(&rate), "rate {rate}");
}

#[test]
fn linear_energy_is_conserved_without_source() {
    let (g, m) = setup();
    let q = ScalarField::from_fn(&g, |x| 1.0 + x[0] * x[0]);
    let u0 = bump(&g, &m, 1.0);
    let u1 = bump(&g, &m, -0.5);
    let traj = solve_linear(&g, &m, &q, &SpaceTimeField::zeros(&g), &u0, &u1, &cfg()).unwrap();
    let e: Vec<f64> = (0..g.levels())
        .map(|n| direct_energy(&g, &m, &q, &traj, n))
        .collect();
    for w in e.windows(2) {
        assert!((w[1] - w[0]).abs() <= 1e-8 * e[0], "{} -> {}", w[0], w[1]);
    }
    assert!(max_step_residual(&traj.energy_log) <= 1e-8);
    assert!((traj.energy_log[0].total() - e[0]).abs() <= 1e-12 * e[0]);
}

#[test]
fn initial_data_preserved_bitwise() {
    let (g, m) = setup();
    let u0 = bump(&g, &m, 0.3);
    let u1 = bump(&g, &m, 0.7);
    let z = ScalarField::zeros(&g);
    let traj = solve_linear(&g, &m, &z, &SpaceTimeField::zeros(&g), &u0, &u1, &cfg()).unwrap();
    assert_eq!(traj.u.frame(0), &u0);
    assert_eq!(traj.ut.frame(0), &u1);
}

#[test]
fn rejects_exterior_source_and_data() {
    let (g, m) = setup();
    let z = ScalarField::zeros(&g);
    let one = ScalarField::constant(&g, 1.0);
    assert!(matches!(
        solve_linear(&g, &m, &z, &SpaceTimeField::zeros(&g), &one, &z, &cfg()),
        Err(Error::Support(_))
    ));
    let src = SpaceTimeField::separable(&g, &one, |_| 1.0);
    assert!(matches!(
        solve_linear(&g, &m, &z, &src, &z, &z, &cfg()),
        Err(Error::Support(_))
    ));
}

fn interior_source(g: &Grid, m: &RegionMask) -> SpaceTimeField {
    SpaceTimeField::separable(g, &bump(g, m, 1.0), |t| (3.0 * t).sin())
}

#[test]
fn zero_nonlinearity_reproduces_linear_solve_bitwise() {
    let (g, m) = setup();
    let u0 = bump(&g, &m, 0.4);
    let u1 = bump(&g, &m, 0.1);
    let h = interior_source(&g, &m);
    let config = SolverConfig {
        slab_steps: 16,
        ..cfg()
    };
    let lin = solve_linear(&g, &m, &ScalarField::zeros(&g), &h, &u0, &u1, &config).unwrap();
    let non = solve_nonlinear(&g, &m, &NonlinearitySpec::zero(), &h, &u0, &u1, &config).unwrap();
    assert_eq!(lin.u, non.u);
    assert_eq!(lin.ut, non.ut);
    assert!(non
        .picard_log
        .iter()
        .all(|s| s.converged && s.max_ratio < 1.0));
}

#[test]
fn linear_potential_spec_routes_to_linear_solver() {
    let (g, m) = setup();
    let a = ScalarField::constant(&g, 2.0);
    let u0 = bump(&g, &m, 0.4);
    let z = ScalarField::zeros(&g);
    let h = SpaceTimeField::zeros(&g);
    let lin = solve_linear(&g, &m, &a, &h, &u0, &z, &cfg()).unwrap();
    let spec = NonlinearitySpec::linear_potential(a).unwrap();
    let non = solve_nonlinear(&g, &m, &spec, &h, &u0, &z, &cfg()).unwrap();
    assert_eq!(lin.u, non.u);
}

fn power(g: &Grid, q: f64, r: f64) -> NonlinearitySpec {
    NonlinearitySpec::power(g, ScalarField::constant(g, q), r).unwrap()
}

#[test]
fn oversized_slab_is_bisected_until_contractive() {
    let (g, m) = setup();
    let spec = power(&g, 200.0, 2.0);
    let u0 = bump(&g, &m, 1.0);
    let z = ScalarField::zeros(&g);
    let config = SolverConfig {
        slab_steps: 128,
        picard_max_iters: 40,
        ..cfg()
    };
    let traj =
        solve_nonlinear(&g, &m, &spec, &SpaceTimeField::zeros(&g), &u0, &z, &config).unwrap();
    assert!(traj.total_bisections() >= 1, "{:?}", traj.picard_log);
    for slab in traj.picard_log.iter().filter(|s| s.converged) {
        assert!(slab.max_ratio < 1.0);
    }
    assert!(
        traj.max_picard_ratio() <= 0.5,
        "{}",
        traj.max_picard_ratio()
    );
}

#[test]
fn small_data_contracts_strongly() {
    let (g, m) = setup();
    let spec = power(&g, 1.0, 1.0);
    let u0 = bump(&g, &m, 0.1);
    let z = ScalarField::zeros(&g);
    let traj = solve_nonlinear(&g, &m, &spec, &SpaceTimeField::zeros(&g), &u0, &z, &cfg()).unwrap();
    assert!(traj.max_picard_ratio() <= 0.5);
    assert_eq!(traj.total_bisections(), 0);
}

#[test]
fn single_step_failure_is_hard_error() {
    let (g, m) = setup();
    let spec = power(&g, 1e9, 2.0);
    let u0 = bump(&g, &m, 5.0);
    let z = ScalarField::zeros(&g);
    let config = SolverConfig {
        slab_steps: 2,
        picard_max_iters: 6,
        ..cfg()
    };
    let res = solve_nonlinear(&g, &m, &spec, &SpaceTimeField::zeros(&g), &u0, &z, &config);
    assert!(matches!(res, Err(Error::PicardFailed { .. })), "{res:?}");
}

#[test]
fn homogeneous_rescaling_matches_direct_solve() {
    let (g, m) = setup();
    let r = 1.0;
    let lambda: f64 = 3.0;
    let base = power(&g, 2.0, r);
    let scaled = power(&g, 2.0 * lambda.powf(-r), r);
    let u0 = bump(&g, &m, 0.5);
    let u1 = bump(&g, &m, -0.2);
    let h = SpaceTimeField::zeros(&g);
    let config = SolverConfig {
        picard_tol: 1e-12,
        ..cfg()
    };
    let a = solve_nonlinear(&g, &m, &base, &h, &u0, &u1, &config).unwrap();
    let b = solve_nonlinear(
        &g,
        &m,
        &scaled,
        &h,
        &u0.scaled(lambda),
        &u1.scaled(lambda),
        &config,
    )
    .unwrap();
    let err = sup_hs(&g, &b.u.sub(&a.u.scaled(lambda))) / sup_hs(&g, &b.u);
    assert!(err < 1e-9, "{err}");
}

#[test]
fn nonlinear_energy_identity_at_fine_step() {
    let g = grid_with(64, 1e-3, 500);
    let m = mask_for(&g);
    let spec = power(&g, 1.0, 1.0).with_damping(Damping::Linear {
        gamma: ScalarField::constant(&g, 0.5),
    });
    let u0 = bump(&g, &m, 1.0);
    let u1 = bump(&g, &m, 0.5);
    let h = interior_source(&g, &m);
    let traj = solve_nonlinear(&g, &m, &spec, &h, &u0, &u1, &cfg()).unwrap();
    let scale = traj
        .energy_log
        .iter()
        .map(|r| r.total())
        .fold(0.0, f64::max);
    let worst = traj
        .energy_log
        .iter()
        .map(|r| r.residual.abs())
        .fold(0.0, f64::max);
    assert!(worst <= 1e-4 * scale, "{worst} vs {scale}");
    assert!(traj.energy_log.last().unwrap().dissipation > 0.0);
}

#[test]
fn continuity_ratio_is_bounded() {
    let (g, m) = setup();
    let spec = power(&g, 1.0, 1.0);
    let u0 = bump(&g, &m, 0.8);
    let u1 = bump(&g, &m, 0.2);
    let h = SpaceTimeField::zeros(&g);
    let direction = m.project_omega(&ScalarField::from_fn(&g, |x| (PI * x[0]).cos()));
    let reference = solve_nonlinear(&g, &m, &spec, &h, &u0, &u1, &cfg()).unwrap();
    let ratios: Vec<f64> = [1e-1, 1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&delta| {
            let mut p0 = u0.clone();
            p0.axpy(delta, &direction);
            let other = solve_nonlinear(&g, &m, &spec, &h, &p0, &u1, &cfg()).unwrap();
            sup_hs(&g, &other.u.sub(&reference.u)) / delta
        })
        .collect();
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    assert!(hi / lo < 1.5, "{ratios:?}");
}

#[test]
fn zero_exterior_matches_plain_nonlinear_solve() {
    let (g, m) = setup();
    let spec = power(&g, 1.0, 1.0);
    let u0 = bump(&g, &m, 0.5);
    let z = ScalarField::zeros(&g);
    let h = interior_source(&g, &m);
    let a = solve_nonlinear(&g, &m, &spec, &h, &u0, &z, &cfg()).unwrap();
    let b = solve_with_exterior(
        &g,
        &m,
        &spec,
        &h,
        &u0,
        &z,
        &SpaceTimeField::zeros(&g),
        &cfg(),
    )
    .unwrap();
    assert_eq!(a, b);
}

fn exterior_profile(g: &Grid, m: &RegionMask, amp: f64) -> ScalarField {
    ScalarField::from_fn(g, |x| {
        let c = -0.9;
        let r = (x[0] - c) / 0.3;
        if r.abs() < 1.0 {
            amp * (1.0 - r * r).powi(2)
        } else {
            0.0
        }
    })
    .restricted(m.w1())
}

#[test]
fn exterior_nodes_carry_phi_exactly() {
    let (g, m) = setup();
    let shape = exterior_profile(&g, &m, 1.0);
    let phi = SpaceTimeField::separable(&g, &shape, |t| (2.0 * t).sin());
    let z = ScalarField::zeros(&g);
    let traj = solve_with_exterior(
        &g,
        &m,
        &NonlinearitySpec::zero(),
        &SpaceTimeField::zeros(&g),
        &z,
        &z,
        &phi,
        &cfg(),
    )
    .unwrap();
    for (k, frame) in traj.u.frames().iter().enumerate() {
        for i in 0..g.len() {
            if !m.omega()[i] {
                assert_eq!(frame.values()[i], phi.frame(k).values()[i]);
            }
        }
    }
    assert!(traj.u.restricted(m.omega()).max_abs() > 0.0);
}

#[test]
fn exterior_data_overlapping_interior_rejected() {
    let (g, m) = setup();
    let z = ScalarField::zeros(&g);
    let phi = SpaceTimeField::separable(&g, &ScalarField::constant(&g, 1.0), |_| 1.0);
    let res = solve_with_exterior(
        &g,
        &m,
        &NonlinearitySpec::zero(),
        &SpaceTimeField::zeros(&g),
        &z,
        &z,
        &phi,
        &cfg(),
    );
    assert!(matches!(res, Err(Error::Support(_))));
}

#[test]
fn damped_static_exterior_settles_to_harmonic_extension() {
    let g = grid_with(64, 1.0 / 16.0, 320);
    let m = mask_for(&g);
    let shape = exterior_profile(&g, &m, 1.0);
    let phi = SpaceTimeField::separable(&g, &shape, |_| 1.0);
    let spec = NonlinearitySpec::zero().with_damping(Damping::Linear {
        gamma: ScalarField::constant(&g, 2.0),
    });
    let z = ScalarField::zeros(&g);
    let u0 = phi.frame(0).clone();
    let traj = solve_with_exterior(
        &g,
        &m,
        &spec,
        &SpaceTimeField::zeros(&g),
        &u0,
        &z,
        &phi,
        &cfg(),
    )
    .unwrap();
    // elliptic oracle: P A P v = -P (-Delta)^s phi on the interior
    let rhs = m
        .project_omega(&g.frac_laplacian(&shape, g.order()).unwrap())
        .scaled(-1.0);
    let limit = cg_solve(
        &g,
        |x, out| {
            let f = masked_stiffness(&g, &ScalarField::from_values(&g, x.to_vec()).unwrap(), &m)
                .unwrap();
            for (i, o) in out.iter_mut().enumerate() {
                *o = if m.omega()[i] { f.values()[i] } else { x[i] };
            }
        },
        &rhs,
        1e-13,
    )
    .unwrap();
    let gap = |level: usize| {
        let v = traj.u.frame(level).restricted(m.omega());
        l2_norm(&g, &v.sub(&limit), m.omega_region())
    };
    let (mid, end) = (gap(g.steps() / 2), gap(g.steps()));
    assert!(end < mid, "{mid} -> {end}");
    assert!(end < 1e-2 * l2_norm(&g, &limit, m.omega_region()), "{end}");
}

#[test]
fn viscous_zero_eps_is_linear_solve() {
    let (g, m) = setup();
    let q = ScalarField::constant(&g, 0.5);
    let u0 = bump(&g, &m, 0.5);
    let z = ScalarField::zeros(&g);
    let h = interior_source(&g, &m);
    let a = solve_linear(&g, &m, &q, &h, &u0, &z, &cfg()).unwrap();
    let b = solve_viscous(&g, &m, &q, &h, &u0, &z, 0.0, &cfg(), false).unwrap();
    assert_eq!(a, b);
}

#[test]
fn viscous_sweep_converges_monotonically() {
    let (g, m) = setup();
    let q = ScalarField::constant(&g, 0.5);
    let u0 = bump(&g, &m, 0.5);
    let u1 = bump(&g, &m, 0.3);
    let h = interior_source(&g, &m);
    let base = solve_linear(&g, &m, &q, &h, &u0, &u1, &cfg()).unwrap();
    let gaps: Vec<f64> = [1e-1, 1e-2, 1e-3]
        .iter()
        .map(|&eps| {
            let t = solve_viscous(&g, &m, &q, &h, &u0, &u1, eps, &cfg(), false).unwrap();
            sup_l2(&g, &t.u.sub(&base.u), m.omega_region())
        })
        .collect();
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
    assert!(gaps[2] < 1e-2 * sup_l2(&g, &base.u, m.omega_region()));
}

#[test]
fn viscous_energy_decays() {
    let (g, m) = setup();
    let q = ScalarField::constant(&g, 0.5);
    let u0 = bump(&g, &m, 0.5);
    let z = ScalarField::zeros(&g);
    let t = solve_viscous(
        &g,
        &m,
        &q,
        &SpaceTimeField::zeros(&g),
        &u0,
        &z,
        0.05,
        &cfg(),
        false,
    )
    .unwrap();
    let e: Vec<f64> = (0..g.levels())
        .map(|n| direct_energy(&g, &m, &q, &t, n))
        .collect();
    for w in e.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-12));
    }
    assert!(e[g.steps()] < 0.99 * e[0]);
    assert!(max_step_residual(&t.energy_log) <= 1e-8);
}

#[test]
fn time_reversal_recovers_initial_data() {
    let (g, m) = setup();
    let q = ScalarField::zeros(&g);
    let u0 = bump(&g, &m, 0.5);
    let u1 = bump(&g, &m, -0.4);
    let h = interior_source(&g, &m);
    let fwd = solve_linear(&g, &m, &q, &h, &u0, &u1, &cfg()).unwrap();
    let last = g.steps();
    let back = solve_viscous(
        &g,
        &m,
        &q,
        &h,
        fwd.u.frame(last),
        fwd.ut.frame(last),
        0.0,
        &cfg(),
        true,
    )
    .unwrap();
    let e0 = l2_norm(&g, &back.u.frame(0).sub(&u0), Region::All) / l2_norm(&g, &u0, Region::All);
    let e1 = l2_norm(&g, &back.ut.frame(0).sub(&u1), Region::All) / l2_norm(&g, &u1, Region::All);
    let dt2 = g.dt() * g.dt();
    assert!(e0 <= dt2 && e1 <= dt2, "{e0} {e1}");
}

#[test]
fn reverse_viscous_damps_backward_in_time() {
    let (g, m) = setup();
    let q = ScalarField::zeros(&g);
    let u0 = bump(&g, &m, 0.5);
    let z = ScalarField::zeros(&g);
    let t = solve_viscous(
        &g,
        &m,
        &q,
        &SpaceTimeField::zeros(&g),
        &u0,
        &z,
        0.05,
        &cfg(),
        true,
    )
    .unwrap();
    assert_eq!(t.u.frame(g.steps()), &u0);
    let e = |n: usize| direct_energy(&g, &m, &q, &t, n);
    assert!(e(0) < e(g.steps()));
}

#[test]
fn nemytskii_basics() {
    let (g, m) = setup();
    let spec = power(&g, 2.0, 1.0);
    let zero = SpaceTimeField::zeros(&g);
    assert_eq!(apply_nemytskii(&spec, &zero).unwrap().max_abs(), 0.0);
    let u = SpaceTimeField::separable(&g, &bump(&g, &m, 1.0), |t| 1.0 + t);
    let lambda = 1.7;
    let a = apply_nemytskii(&spec, &u.scaled(lambda)).unwrap();
    let b = apply_nemytskii(&spec, &u).unwrap().scaled(lambda.powi(2));
    assert!(a.sub(&b).max_abs() <= 1e-12 * b.max_abs());
}

#[test]
fn nemytskii_modulus_decays() {
    let (g, m) = setup();
    let spec = power(&g, 1.0, 1.0);
    let u = SpaceTimeField::separable(&g, &bump(&g, &m, 1.0), |t| (2.0 * t).cos());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let dirs: Vec<SpaceTimeField> = (0..3)
        .map(|_| {
            let frames = (0..g.levels())
                .map(|_| random_field(&g, &mut rng))
                .collect();
            SpaceTimeField::from_frames(&g, frames).unwrap()
        })
        .collect();
    let deltas = [1e-1, 1e-2, 1e-4, 1e-6, 1e-8];
    let table = nemytskii_modulus(&spec, &g, &m, &u, &deltas, &dirs).unwrap();
    for w in table.windows(2) {
        assert!(w[1].value < w[0].value);
    }
    assert!(table.last().unwrap().value < 1e-6);
    assert!(nemytskii_modulus(&power(&g, 1.0, 1.5), &g, &m, &u, &deltas, &dirs).is_err());
}

#[test]
fn tabulated_out_of_range_refused() {
    let (g, m) = setup();
    let table = Tabulated::new(
        ScalarField::constant(&g, 1.0),
        vec![-1.0, 0.0, 1.0],
        vec![-1.0, 0.0, 1.0],
    )
    .unwrap();
    let spec = NonlinearitySpec::custom(table, 0.0).unwrap();
    let u = SpaceTimeField::separable(&g, &bump(&g, &m, 2.0), |_| 1.0);
    assert!(matches!(
        apply_nemytskii(&spec, &u),
        Err(Error::Extrapolation { .. })
    ));
}

#[test]
fn trajectory_directory_round_trip() {
    let (g, m) = setup();
    let spec = power(&g, 1.0, 1.0);
    let u0 = bump(&g, &m, 0.5);
    let z = ScalarField::zeros(&g);
    let config = SolverConfig {
        slab_steps: 32,
        ..cfg()
    };
    let traj =
        solve_nonlinear(&g, &m, &spec, &SpaceTimeField::zeros(&g), &u0, &z, &config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    io::write_trajectory(dir.path(), &g, &traj).unwrap();
    let (g2, back) = io::read_trajectory(dir.path()).unwrap();
    assert_eq!(g2, g);
    assert_eq!(back.u, traj.u);
    assert_eq!(back.picard_log.len(), traj.picard_log.len());
    assert_eq!(back.energy_log.len(), traj.energy_log.len());
    let header = std::fs::read_to_string(dir.path().join("energy_log.csv")).unwrap();
    assert!(header.starts_with("level,time,kinetic,elastic,potential,work,dissipation,residual"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn energy_identity_holds_for_random_data(seed in 0u64..1000, qlevel in 0.0f64..3.0) {
        let g = grid_with(32, 1.0 / 64.0, 32);
        let m = mask_for(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut random = || m.project_omega(&random_field(&g, &mut rng));
        let u0 = random();
        let u1 = random();
        let src = random();
        let q = ScalarField::constant(&g, qlevel);
        let h = SpaceTimeField::separable(&g, &src, |t| (5.0 * t).cos());
        let traj = solve_linear(&g, &m, &q, &h, &u0, &u1, &cfg()).unwrap();
        prop_assert!(max_step_residual(&traj.energy_log) <= 1e-8);
    }
}
