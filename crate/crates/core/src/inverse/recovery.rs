//! Recovery of a homogeneous nonlinearity `f(x, tau) = f(x, 1) |tau|^r tau`
//! from exterior measurements.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::control::{runge_control, ControlProblem, RungeOutcome};
use super::optim::{IterationRecord, NormalCg};
use super::probe::{check_epsilons, fit_line};
use super::source::{SourceInversion, SourceProblem};
use crate::dnmap::{DnOracle, DnRecord, ExteriorInput};
use crate::error::{Error, Result};
use crate::forward::SolverConfig;
use crate::lattice::{l2_norm, time_weights, Grid, RegionMask, ScalarField, SpaceTimeField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoverySettings {
    /// Sweep amplitudes, strictly decreasing.
    pub epsilons: Vec<f64>,
    pub runge_alpha: f64,
    pub runge_iters: usize,
    /// Largest accepted relative error of the control stage.
    pub max_control_error: f64,
    /// Largest accepted deviation of the slope fit, in log units.
    pub max_fit_residual: f64,
    /// Relative Tikhonov weights for the source inversion, decreasing.
    pub alphas: Vec<f64>,
    /// Declared relative noise level of every oracle trace.
    pub noise_level: Option<f64>,
    /// Discrepancy-principle safety factor.
    pub discrepancy_factor: f64,
    pub inversion_iters: usize,
}

impl Default for RecoverySettings {
    fn default() -> Self {
        Self {
            epsilons: vec![0.2, 0.1, 0.05, 0.025],
            runge_alpha: 1e-8,
            runge_iters: 1500,
            max_control_error: 0.15,
            max_fit_residual: 0.2,
            alphas: vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7],
            noise_level: None,
            discrepancy_factor: 1.5,
            inversion_iters: 300,
        }
    }
}

impl RecoverySettings {
    pub fn validate(&self) -> Result<()> {
        check_epsilons(&self.epsilons)?;
        if self.alphas.is_empty() || self.alphas.iter().any(|&a| !(a >= 0.0)) || self.alphas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidArgument("alphas must be non-negative and strictly decreasing".into()));
        }
        if let Some(level) = self.noise_level {
            if !(level >= 0.0 && level.is_finite()) {
                return Err(Error::InvalidArgument(format!("noise level must be >= 0, got {level}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemainderRow {
    pub epsilon: f64,
    /// `||D(eps)||` over `(W2)_T`.
    pub norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaRow {
    pub alpha: f64,
    pub relative_misfit: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct RecoveryResult {
    /// Reconstructed `f(x, 1)`, zero off the interior.
    pub f_at_one: ScalarField,
    /// Slope-based estimate of `r`; `None` when the remainder vanishes.
    pub r_estimate: Option<f64>,
    /// Exponent used for normalization and the homogeneous extension.
    pub r_used: f64,
    pub residual_history: Vec<IterationRecord>,
    /// Absolute Tikhonov weight of the selected inversion.
    pub regularization_used: f64,
    pub relative_alpha: f64,
    pub control_error: f64,
    pub control_iterations: usize,
    pub remainders: Vec<RemainderRow>,
    pub fit_residual: f64,
    pub alpha_table: Vec<AlphaRow>,
    pub degenerate: bool,
    pub warnings: Vec<String>,
    /// The control used for every probe.
    pub control: RungeOutcome,
    /// Extrapolated linear trace of the unit-amplitude control.
    pub linear_reference: SpaceTimeField,
}

impl RecoveryResult {
    /// Homogeneous extension `f(x_idx, tau) = f(x_idx, 1) |tau|^r tau`.
    pub fn evaluate(&self, idx: usize, tau: f64) -> f64 {
        self.f_at_one.values()[idx] * tau.abs().powf(self.r_used) * tau
    }

    pub fn summary(&self) -> RecoverySummary {
        RecoverySummary {
            r_estimate: self.r_estimate,
            r_used: self.r_used,
            control_error: self.control_error,
            fit_residual: self.fit_residual,
            final_relative_misfit: self
                .alpha_table
                .iter()
                .find(|row| row.alpha == self.relative_alpha)
                .map_or(0.0, |row| row.relative_misfit),
            alpha: self.regularization_used,
            relative_alpha: self.relative_alpha,
            control_iterations: self.control_iterations,
            inversion_iterations: self.residual_history.len().saturating_sub(1),
            degenerate: self.degenerate,
            warnings: self.warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoverySummary {
    pub r_estimate: Option<f64>,
    pub r_used: f64,
    pub control_error: f64,
    pub fit_residual: f64,
    pub final_relative_misfit: f64,
    pub alpha: f64,
    pub relative_alpha: f64,
    pub control_iterations: usize,
    pub inversion_iterations: usize,
    pub degenerate: bool,
    pub warnings: Vec<String>,
}

fn stage(name: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| Error::Pipeline {
        stage: name.to_string(),
        reason: e.to_string(),
    }
}

/// Traces over `(W2)_T` with the trapezoid-in-time, cell-in-space `L^2` norm.
struct TraceAlgebra<'a> {
    grid: &'a Grid,
    mask: &'a RegionMask,
    weights: Vec<f64>,
}

impl<'a> TraceAlgebra<'a> {
    fn new(grid: &'a Grid, mask: &'a RegionMask) -> Self {
        let cell = grid.cell_volume();
        Self {
            grid,
            mask,
            weights: time_weights(grid).iter().map(|w| w * cell).collect(),
        }
    }

    fn norm(&self, t: &SpaceTimeField) -> f64 {
        t.frames()
            .iter()
            .zip(&self.weights)
            .map(|(f, w)| w * self.mask.w2_nodes().iter().map(|&i| f.values()[i].powi(2)).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    fn combine(&self, terms: &[(f64, &SpaceTimeField)]) -> SpaceTimeField {
        let mut out = SpaceTimeField::zeros(self.grid);
        for (c, t) in terms {
            out.axpy(*c, t);
        }
        out
    }
}

/// Linear reference `Lambda_lin phi` from the scaled traces `T(e) = trace(e phi) / e`
/// at `e_min`, `e_min / 2`, `e_min / 4`, extrapolated with the observed
/// contraction rate of successive differences.
fn richardson(alg: &TraceAlgebra<'_>, t: [&SpaceTimeField; 3], warnings: &mut Vec<String>) -> SpaceTimeField {
    let d01 = alg.norm(&t[0].sub(t[1]));
    let d12 = alg.norm(&t[1].sub(t[2]));
    if d12 <= 1e-13 * alg.norm(t[2]) {
        return t[2].clone();
    }
    let rho = d01 / d12;
    if rho <= 1.05 {
        warnings.push(format!("Richardson rate {rho:.3} <= 1: using the smallest amplitude as linear reference"));
        return t[2].clone();
    }
    alg.combine(&[(1.0 + 1.0 / (rho - 1.0), t[2]), (-1.0 / (rho - 1.0), t[1])])
}

/// Coefficients `c_k` with `N_0 = sum_k c_k N(e_k)` for the least-squares fit
/// `N(e) = N_0 + e^r N_1`.
fn extrapolation_weights(epsilons: &[f64], r: f64) -> Vec<f64> {
    let z: Vec<f64> = epsilons.iter().map(|e| e.powf(r)).collect();
    let n = z.len() as f64;
    let sz: f64 = z.iter().sum();
    let szz: f64 = z.iter().map(|v| v * v).sum();
    let det = n * szz - sz * sz;
    z.iter().map(|zk| (szz - sz * zk) / det).collect()
}

/// Oracle traces at amplitudes `tau * e` and the remainders
/// `D(e) = trace(tau e phi) - tau e L`.
fn remainder_sweep(
    oracle: &dyn DnOracle,
    control: &ExteriorInput,
    linear: &SpaceTimeField,
    tau: f64,
    epsilons: &[f64],
) -> Result<(Vec<DnRecord>, Vec<SpaceTimeField>)> {
    let records: Vec<DnRecord> = epsilons
        .par_iter()
        .map(|&e| oracle.measure(&control.rescaled(tau * e, format!("amplitude_{:e}", tau * e))))
        .collect::<Result<_>>()?;
    let remainders = records
        .iter()
        .zip(epsilons)
        .map(|(rec, &e)| rec.trace.sub(&linear.scaled(tau * e)))
        .collect();
    Ok((records, remainders))
}

struct PointValue {
    m: ScalarField,
    relative_alpha: f64,
    inversion: SourceInversion,
    alpha_table: Vec<AlphaRow>,
}

/// Inverts `N_0 = lim D(e) / e^{r+1}` with weight `-|v|^r v`, which yields
/// `f(x, tau)` for the sweep at amplitude `tau`.
#[allow(clippy::too_many_arguments)]
fn invert_point_value(
    alg: &TraceAlgebra<'_>,
    control: &RungeOutcome,
    linear_norm: f64,
    tau: f64,
    records: &[DnRecord],
    remainders: &[SpaceTimeField],
    r: f64,
    settings: &RecoverySettings,
    cfg: &SolverConfig,
    warnings: &mut Vec<String>,
) -> Result<PointValue> {
    let (grid, mask) = (alg.grid, alg.mask);
    let c = extrapolation_weights(&settings.epsilons, r);
    let terms: Vec<(f64, &SpaceTimeField)> = c
        .iter()
        .zip(&settings.epsilons)
        .zip(remainders)
        .map(|((ck, e), d)| (ck / e.powf(r + 1.0), d))
        .collect();
    let normalized = alg.combine(&terms);
    let noise_norm = settings.noise_level.map(|level| {
        c.iter()
            .zip(&settings.epsilons)
            .zip(records)
            .map(|((ck, e), rec)| {
                let own = level * alg.norm(&rec.trace);
                let reference = level * tau.abs() * e * linear_norm;
                (ck / e.powf(r + 1.0)).powi(2) * (own * own + reference * reference)
            })
            .sum::<f64>()
            .sqrt()
    });

    let weight = control.v.map(|v| -v.abs().powf(r) * v).restricted(mask.omega());
    let observed_norm = alg.norm(&normalized);
    let mut problem = SourceProblem::new(grid, mask, &ScalarField::zeros(grid), &[(weight, normalized)], cfg)?;
    let cg = NormalCg {
        max_iters: settings.inversion_iters,
        ..NormalCg::default()
    };
    let mut alpha_table = Vec::new();
    let mut chosen = None;
    let mut warm: Option<ScalarField> = None;
    for &alpha in &settings.alphas {
        let sol = problem.solve(alpha, None, warm.as_ref(), &cg)?;
        alpha_table.push(AlphaRow {
            alpha,
            relative_misfit: sol.relative_misfit,
            iterations: sol.report.iterations,
            converged: sol.report.converged,
        });
        warm = Some(sol.m.clone());
        match noise_norm {
            Some(delta) => {
                let stop = sol.relative_misfit * observed_norm <= settings.discrepancy_factor * delta;
                chosen = Some((alpha, sol));
                if stop {
                    break;
                }
            }
            None => {
                if sol.report.converged || chosen.is_none() {
                    chosen = Some((alpha, sol));
                }
            }
        }
    }
    let (relative_alpha, inversion) = chosen.expect("at least one alpha");
    if let Some(delta) = noise_norm {
        if inversion.relative_misfit * observed_norm > settings.discrepancy_factor * delta {
            warnings.push(format!("discrepancy level not reached; using smallest alpha {relative_alpha:e}"));
        }
    }
    Ok(PointValue {
        m: inversion.m.restricted(mask.omega()),
        relative_alpha,
        inversion,
        alpha_table,
    })
}

/// Pipeline: control with `v ~ 1` on the interior cylinder, amplitude sweep
/// through the oracle, remainder slope, normalized source inversion for
/// `f(x, 1)`.
pub fn recover_nonlinearity(
    oracle: &dyn DnOracle,
    r_known: Option<f64>,
    settings: &RecoverySettings,
    cfg: &SolverConfig,
) -> Result<RecoveryResult> {
    settings.validate()?;
    if let Some(r) = r_known {
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::InvalidArgument(format!("known exponent must satisfy 0 < r <= 1, got {r}")));
        }
    }
    let grid = oracle.grid();
    let mask = oracle.mask();
    let mut warnings = Vec::new();

    let ones = SpaceTimeField::separable(grid, &ScalarField::constant(grid, 1.0).restricted(mask.omega()), |_| 1.0);
    let problem = ControlProblem {
        target: ones,
        alpha: settings.runge_alpha,
        max_outer_iters: settings.runge_iters,
        grad_tol: 1e-12,
    };
    let control = runge_control(&problem, grid, mask, &ScalarField::zeros(grid), cfg).map_err(stage("runge_control"))?;
    if control.achieved_error > settings.max_control_error {
        return Err(Error::Pipeline {
            stage: "runge_control".into(),
            reason: format!(
                "control error {:.4} exceeds {:.4}",
                control.achieved_error, settings.max_control_error
            ),
        });
    }

    let e_min = *settings.epsilons.last().expect("validated");
    let mut amplitudes = settings.epsilons.clone();
    amplitudes.extend([e_min / 2.0, e_min / 4.0]);
    let records: Vec<DnRecord> = amplitudes
        .par_iter()
        .map(|&e| oracle.measure(&control.input.rescaled(e, format!("amplitude_{e:e}"))))
        .collect::<Result<_>>()
        .map_err(stage("amplitude_sweep"))?;
    let alg = TraceAlgebra::new(grid, mask);
    let scaled: Vec<SpaceTimeField> = records.iter().zip(&amplitudes).map(|(r, e)| r.trace.scaled(1.0 / e)).collect();
    let k = settings.epsilons.len();
    let linear = richardson(&alg, [&scaled[k - 1], &scaled[k], &scaled[k + 1]], &mut warnings);
    let records = &records[..k];
    let remainder_fields: Vec<SpaceTimeField> = settings
        .epsilons
        .iter()
        .zip(records)
        .map(|(&e, rec)| rec.trace.sub(&linear.scaled(e)))
        .collect();
    let remainders: Vec<RemainderRow> = settings
        .epsilons
        .iter()
        .zip(&remainder_fields)
        .map(|(&epsilon, d)| RemainderRow {
            epsilon,
            norm: alg.norm(d),
        })
        .collect();

    let linear_norm = alg.norm(&linear);
    let degenerate = remainders.iter().all(|row| row.norm <= 1e-9 * row.epsilon * linear_norm);
    let control_iterations = control.report.iterations;
    if degenerate {
        warnings.push("remainder vanishes at every amplitude: degenerate slope, f(x, 1) = 0".into());
        return Ok(RecoveryResult {
            f_at_one: ScalarField::zeros(grid),
            r_estimate: None,
            r_used: r_known.unwrap_or(0.0),
            residual_history: Vec::new(),
            regularization_used: 0.0,
            relative_alpha: 0.0,
            control_error: control.achieved_error,
            control_iterations,
            remainders,
            fit_residual: 0.0,
            alpha_table: Vec::new(),
            degenerate,
            warnings,
            control,
            linear_reference: linear,
        });
    }

    let lx: Vec<f64> = remainders.iter().map(|r| r.epsilon.ln()).collect();
    let ly: Vec<f64> = remainders.iter().map(|r| r.norm.max(f64::MIN_POSITIVE).ln()).collect();
    let (slope, _, fit_residual) = fit_line(&lx, &ly);
    if fit_residual > settings.max_fit_residual {
        return Err(Error::Pipeline {
            stage: "r_estimate".into(),
            reason: format!(
                "slope fit deviates by {fit_residual:.3} > {} in log units",
                settings.max_fit_residual
            ),
        });
    }
    let r_estimate = slope - 1.0;
    if !(r_estimate > 0.0 && r_estimate <= 1.0) {
        warnings.push(format!("estimated r = {r_estimate:.4} lies outside (0, 1]"));
    }
    let r_used = r_known.unwrap_or(r_estimate);

    let point = invert_point_value(
        &alg,
        &control,
        linear_norm,
        1.0,
        records,
        &remainder_fields,
        r_used,
        settings,
        cfg,
        &mut warnings,
    )
    .map_err(stage("source_inversion"))?;
    Ok(RecoveryResult {
        f_at_one: point.m,
        r_estimate: Some(r_estimate),
        r_used,
        residual_history: point.inversion.report.history.clone(),
        regularization_used: point.inversion.alpha,
        relative_alpha: point.relative_alpha,
        control_error: control.achieved_error,
        control_iterations,
        remainders,
        fit_residual,
        alpha_table: point.alpha_table,
        degenerate,
        warnings,
        control,
        linear_reference: linear,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomogeneityRow {
    pub tau: f64,
    /// `||f_direct(., tau) - f_extended(., tau)|| / ||f_extended(., tau)||` on the interior.
    pub relative_gap: f64,
    pub relative_alpha: f64,
}

/// Compares the homogeneous extension of `result` at `tau` with a direct
/// reconstruction from oracle probes at amplitudes `tau * e`, reusing the
/// control and linear reference of `result`.
pub fn homogeneity_check(
    oracle: &dyn DnOracle,
    result: &RecoveryResult,
    tau: f64,
    settings: &RecoverySettings,
    cfg: &SolverConfig,
) -> Result<HomogeneityRow> {
    settings.validate()?;
    if tau == 0.0 || !tau.is_finite() {
        return Err(Error::InvalidArgument(format!("amplitude scale must be finite and nonzero, got {tau}")));
    }
    let grid = oracle.grid();
    let mask = oracle.mask();
    let alg = TraceAlgebra::new(grid, mask);
    let (records, remainders) =
        remainder_sweep(oracle, &result.control.input, &result.linear_reference, tau, &settings.epsilons)
            .map_err(stage("amplitude_sweep"))?;
    let mut warnings = Vec::new();
    let point = invert_point_value(
        &alg,
        &result.control,
        alg.norm(&result.linear_reference),
        tau,
        &records,
        &remainders,
        result.r_used,
        settings,
        cfg,
        &mut warnings,
    )
    .map_err(stage("source_inversion"))?;
    let extended = result.f_at_one.map(|f| f * tau.abs().powf(result.r_used) * tau);
    let norm = l2_norm(grid, &extended, mask.omega_region());
    let gap = l2_norm(grid, &point.m.sub(&extended), mask.omega_region());
    Ok(HomogeneityRow {
        tau,
        relative_gap: if norm > 0.0 { gap / norm } else { gap },
        relative_alpha: point.relative_alpha,
    })
}
