//! Simultaneous recovery of a linear potential `a` and initial data.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::control::{exterior_response, runge_control, ControlProblem};
use super::initial::{recover_initial_data, InitialDataRecovery};
use super::optim::{IterationRecord, NormalCg};
use super::source::SourceProblem;
use crate::dnmap::{observe, DnOracle, DnRecord, ExteriorInput};
use crate::error::{Error, Result};
use crate::forward::{NonlinearitySpec, SolverConfig};
use crate::lattice::{l2_norm, Grid, RegionMask, ScalarField, SpaceTimeField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialSettings {
    /// Number of probe targets: the constant and `cos(k pi (x - x_0) / width)`.
    pub probes: usize,
    pub probe_alpha: f64,
    pub probe_iters: usize,
    /// Relative Tikhonov weight for the initial-data stages.
    pub initial_alpha: f64,
    pub gauss_newton_steps: usize,
    pub inversion_iters: usize,
}

impl Default for PotentialSettings {
    fn default() -> Self {
        Self {
            probes: 3,
            probe_alpha: 1e-6,
            probe_iters: 60,
            initial_alpha: 1e-8,
            gauss_newton_steps: 6,
            inversion_iters: 300,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PotentialRecovery {
    pub a: ScalarField,
    pub u0: ScalarField,
    pub u1: ScalarField,
    /// Initial data fitted with `a = 0`.
    pub initial_guess: InitialDataRecovery,
    /// Initial data refitted with the recovered `a`.
    pub initial_final: InitialDataRecovery,
    pub probe_errors: Vec<f64>,
    /// Potential-stage normal-equation iterations, concatenated over Gauss-Newton steps.
    pub history: Vec<IterationRecord>,
    pub gauss_newton_steps: usize,
    /// Misfit of the probe differences at the recovered `a`, relative to their norm.
    pub relative_misfit: f64,
    pub regularization_used: f64,
}

fn stage(name: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| Error::Pipeline {
        stage: name.to_string(),
        reason: e.to_string(),
    }
}

/// Probe targets on the interior cylinder, constant in time.
fn probe_targets(grid: &Grid, mask: &RegionMask, count: usize) -> Vec<SpaceTimeField> {
    let xs: Vec<f64> = mask.omega_nodes().iter().map(|&i| grid.node_coordinates(i)[0]).collect();
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo).max(grid.spacing());
    (0..count)
        .map(|k| {
            let shape = ScalarField::from_fn(grid, |x| (k as f64 * std::f64::consts::PI * (x[0] - lo) / width).cos())
                .restricted(mask.omega());
            SpaceTimeField::separable(grid, &shape, |_| 1.0)
        })
        .collect()
}

fn trace_norm(grid: &Grid, mask: &RegionMask, frames: &[SpaceTimeField]) -> f64 {
    frames
        .iter()
        .map(|t| crate::lattice::spacetime_l2(grid, t, mask.w2_region()).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Stage 1 fits initial data to the passive record with `a = 0`. Stage 2
/// recovers `a` by Gauss-Newton from active-minus-passive differences of
/// control probes, which carry no initial-data contribution. Stage 3 refits the
/// initial data with the recovered `a`. `alpha` is the relative Tikhonov weight
/// of every linearized potential step.
pub fn recover_potential(
    oracle: &dyn DnOracle,
    alpha: f64,
    settings: &PotentialSettings,
    cfg: &SolverConfig,
) -> Result<PotentialRecovery> {
    if settings.probes == 0 {
        return Err(Error::InvalidArgument("at least one probe is required".into()));
    }
    let grid = oracle.grid();
    let mask = oracle.mask();
    let passive = oracle.measure(&ExteriorInput::passive(grid, "passive")).map_err(stage("passive_measurement"))?;
    let initial_guess = recover_initial_data(&passive, grid, mask, &NonlinearitySpec::zero(), settings.initial_alpha, cfg)
        .map_err(stage("initial_data"))?;

    let zero = ScalarField::zeros(grid);
    let controls = probe_targets(grid, mask, settings.probes)
        .into_par_iter()
        .map(|target| {
            let problem = ControlProblem {
                target,
                alpha: settings.probe_alpha,
                max_outer_iters: settings.probe_iters,
                grad_tol: 1e-12,
            };
            runge_control(&problem, grid, mask, &zero, cfg)
        })
        .collect::<Result<Vec<_>>>()
        .map_err(stage("probe_controls"))?;
    let probe_errors = controls.iter().map(|c| c.achieved_error).collect();
    let inputs: Vec<ExteriorInput> = controls
        .iter()
        .enumerate()
        .map(|(k, c)| c.input.rescaled(1.0, format!("probe_{k}")))
        .collect();
    let differences: Vec<SpaceTimeField> = inputs
        .par_iter()
        .map(|input| oracle.measure(input).map(|rec: DnRecord| rec.trace.sub(&passive.trace)))
        .collect::<Result<_>>()
        .map_err(stage("probe_measurements"))?;
    let data_norm = trace_norm(grid, mask, &differences);

    let cg = NormalCg {
        max_iters: settings.inversion_iters,
        ..NormalCg::default()
    };
    let mut a = ScalarField::zeros(grid);
    let mut history = Vec::new();
    let mut steps = 0;
    let mut regularization_used = 0.0;
    let mut misfit = data_norm;
    for _ in 0..settings.gauss_newton_steps {
        let (experiments, residuals) = linearize(grid, mask, &a, &inputs, &differences, cfg).map_err(stage("potential"))?;
        misfit = trace_norm(grid, mask, &residuals);
        if misfit <= 1e-12 * data_norm.max(f64::MIN_POSITIVE) {
            break;
        }
        let mut problem = SourceProblem::new(grid, mask, &a, &experiments, cfg).map_err(stage("potential"))?;
        let step = problem.solve(alpha, Some(&a.scaled(-1.0)), None, &cg).map_err(stage("potential"))?;
        history.extend(step.report.history.iter().copied());
        regularization_used = step.alpha;
        steps += 1;
        let delta = step.m.restricted(mask.omega());
        a = a.add(&delta);
        let change = l2_norm(grid, &delta, mask.omega_region());
        if change <= 1e-4 * l2_norm(grid, &a, mask.omega_region()).max(f64::MIN_POSITIVE) {
            let (_, residuals) = linearize(grid, mask, &a, &inputs, &differences, cfg).map_err(stage("potential"))?;
            misfit = trace_norm(grid, mask, &residuals);
            break;
        }
    }

    let spec = NonlinearitySpec::linear_potential(a.clone()).map_err(stage("initial_data_refit"))?;
    let initial_final =
        recover_initial_data(&passive, grid, mask, &spec, settings.initial_alpha, cfg).map_err(stage("initial_data_refit"))?;
    Ok(PotentialRecovery {
        u0: initial_final.u0.clone(),
        u1: initial_final.u1.clone(),
        a,
        initial_guess,
        initial_final,
        probe_errors,
        history,
        gauss_newton_steps: steps,
        relative_misfit: if data_norm > 0.0 { misfit / data_norm } else { misfit },
        regularization_used,
    })
}

/// Experiments `(-u_k, d_k - trace_k(a))` of the linearization at `a`, and the residuals.
#[allow(clippy::type_complexity)]
fn linearize(
    grid: &Grid,
    mask: &RegionMask,
    a: &ScalarField,
    inputs: &[ExteriorInput],
    differences: &[SpaceTimeField],
    cfg: &SolverConfig,
) -> Result<(Vec<(SpaceTimeField, SpaceTimeField)>, Vec<SpaceTimeField>)> {
    let pairs: Vec<(SpaceTimeField, SpaceTimeField)> = inputs
        .par_iter()
        .zip(differences)
        .map(|(input, d)| {
            let phi = input.data();
            let frames: Vec<Vec<f64>> = phi.frames().iter().map(|f| f.values().to_vec()).collect();
            let states = exterior_response(grid, mask, a.values(), &frames, cfg.cg_tol)?;
            let interior = SpaceTimeField::from_frames_unchecked(
                states.into_iter().map(|s| ScalarField::from_vec_unchecked(s.u)).collect(),
            );
            let predicted = observe(grid, mask, &interior.add(&phi));
            Ok((interior.scaled(-1.0), d.sub(&predicted)))
        })
        .collect::<Result<_>>()?;
    let residuals = pairs.iter().map(|(_, r)| r.clone()).collect();
    Ok((pairs, residuals))
}
