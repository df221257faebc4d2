//! Experiment subcommands. Every run writes into
//! `<out>/<hash16>/<command>/` and leaves `manifest.json` there; the canonical
//! scenario is stored once per hash as `<out>/<hash16>/scenario.txt`.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use fracwave::dnmap::{io as dn_io, DnOracle, DnRecord, ExteriorInput, SyntheticOracle};
use fracwave::forward::{io as fw_io, max_step_residual, solve_with_exterior, NonlinearityKind, NonlinearitySpec, SolverConfig};
use fracwave::inverse::io::{write_initial, write_potential, write_recovery, write_rows, write_runge};
use fracwave::inverse::{
    linearization_probe, recover_initial_data, recover_nonlinearity, recover_potential, runge_sweep, sweep_table,
};
use fracwave::lattice::io::{write_mask, write_spacetime};
use fracwave::lattice::{l2_norm, Grid, RegionMask, ScalarField, SpaceTimeField};

use crate::error::{HarnessError, Result};
use crate::noise::{trace_norm, NoisyOracle};
use crate::oracle::HalfResolutionOracle;
use crate::scenario::{profile, Scenario};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Simulate,
    Dnmap,
    Probe,
    Runge,
    RecoverNonlinearity,
    RecoverInitial,
    RecoverPotential,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Self::Simulate,
        Self::Dnmap,
        Self::Probe,
        Self::Runge,
        Self::RecoverNonlinearity,
        Self::RecoverInitial,
        Self::RecoverPotential,
    ];

    /// Subcommand name, also the output subdirectory.
    pub fn command(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Dnmap => "dnmap",
            Self::Probe => "probe",
            Self::Runge => "runge",
            Self::RecoverNonlinearity => "recover-nonlinearity",
            Self::RecoverInitial => "recover-initial",
            Self::RecoverPotential => "recover-potential",
        }
    }

    /// Value of `experiment.kind` that admits this experiment besides `any`.
    pub fn kind(self) -> String {
        self.command().replace('-', "_")
    }
}

/// Lattice, geometry, hidden truth and solver settings of a scenario.
pub struct Setup {
    pub grid: Grid,
    pub mask: RegionMask,
    pub spec: NonlinearitySpec,
    pub u0: ScalarField,
    pub u1: ScalarField,
    pub cfg: SolverConfig,
}

impl Setup {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        let grid = scenario.grid()?;
        let mask = scenario.mask(&grid)?;
        let spec = scenario.spec(&grid, &mask)?;
        let (u0, u1) = scenario.initial_data(&grid, &mask);
        Ok(Self {
            grid,
            mask,
            spec,
            u0,
            u1,
            cfg: scenario.solver_config()?,
        })
    }

    /// The measurement oracle: synthetic data on the scenario lattice or on
    /// the half-resolution lattice, with the configured noise.
    pub fn oracle(&self, scenario: &Scenario) -> Result<NoisyOracle<DataSource>> {
        let provenance = scenario.hash();
        let source = match scenario.choice("data.resolution") {
            "half" => {
                let coarse = scenario.coarse_grid()?;
                let coarse_mask = scenario.mask(&coarse)?;
                let (u0, u1) = scenario.initial_data(&coarse, &coarse_mask);
                let spec = scenario.spec(&coarse, &coarse_mask)?;
                let inner = SyntheticOracle::new(coarse, coarse_mask, spec, u0, u1, self.cfg)?
                    .with_provenance(provenance);
                DataSource::Half(HalfResolutionOracle::new(self.grid.clone(), self.mask.clone(), inner)?)
            }
            _ => DataSource::Full(
                SyntheticOracle::new(
                    self.grid.clone(),
                    self.mask.clone(),
                    self.spec.clone(),
                    self.u0.clone(),
                    self.u1.clone(),
                    self.cfg,
                )?
                .with_provenance(provenance),
            ),
        };
        Ok(NoisyOracle::new(source, scenario.noise_level(), scenario.seed()))
    }

    fn interior_error(&self, estimate: &ScalarField, truth: &ScalarField) -> Option<f64> {
        let norm = l2_norm(&self.grid, truth, self.mask.omega_region());
        (norm > 0.0).then(|| l2_norm(&self.grid, &estimate.sub(truth), self.mask.omega_region()) / norm)
    }

    /// Error of a reconstructed initial-data pair; each component is measured
    /// against its own norm, or against the norm of the other one when it vanishes.
    fn initial_errors(&self, u0: &ScalarField, u1: &ScalarField) -> Value {
        let omega = self.mask.omega_region();
        let n0 = l2_norm(&self.grid, &self.u0, omega);
        let n1 = l2_norm(&self.grid, &self.u1, omega);
        let e0 = l2_norm(&self.grid, &u0.sub(&self.u0), omega);
        let e1 = l2_norm(&self.grid, &u1.sub(&self.u1), omega);
        let scale = |own: f64, other: f64| if own > 0.0 { Some(own) } else { (other > 0.0).then_some(other) };
        json!({
            "u0_relative_error": scale(n0, n1).map(|s| e0 / s),
            "u1_relative_error": scale(n1, n0).map(|s| e1 / s),
        })
    }
}

/// Synthetic measurements on the scenario lattice or a coarser one.
// built once per run, so the size gap between variants is irrelevant
#[allow(clippy::large_enum_variant)]
pub enum DataSource {
    Full(SyntheticOracle),
    Half(HalfResolutionOracle),
}

impl DnOracle for DataSource {
    fn grid(&self) -> &Grid {
        match self {
            Self::Full(o) => o.grid(),
            Self::Half(o) => o.grid(),
        }
    }

    fn mask(&self) -> &RegionMask {
        match self {
            Self::Full(o) => o.mask(),
            Self::Half(o) => o.mask(),
        }
    }

    fn measure(&self, input: &ExteriorInput) -> fracwave::Result<DnRecord> {
        match self {
            Self::Full(o) => o.measure(input),
            Self::Half(o) => o.measure(input),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub scenario_hash: String,
    pub version: String,
    pub noise_level: f64,
    pub seed: u64,
    /// Paths relative to the run directory, sorted.
    pub files: Vec<String>,
    pub summary: Value,
}

/// Directory of a scenario below the output root.
pub fn scenario_dir(out: &Path, scenario: &Scenario) -> PathBuf {
    out.join(scenario.short_hash())
}

pub fn run_dir(out: &Path, scenario: &Scenario, command: &str) -> PathBuf {
    scenario_dir(out, scenario).join(command)
}

fn ensure_admitted(scenario: &Scenario, command: &str) -> Result<()> {
    let kind = scenario.choice("experiment.kind");
    if kind != "any" && kind.replace('_', "-") != command {
        return Err(HarnessError::Scenario(format!(
            "scenario is restricted to experiment.kind = {kind}, not {command}"
        )));
    }
    Ok(())
}

/// Creates the run directory, stores the canonical scenario and returns the path.
pub fn prepare(out: &Path, scenario: &Scenario, command: &str) -> Result<PathBuf> {
    let dir = run_dir(out, scenario, command);
    fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    let text_path = scenario_dir(out, scenario).join("scenario.txt");
    fs::write(&text_path, scenario.canonical_text()).map_err(|e| HarnessError::io(&text_path, e))?;
    Ok(dir)
}

fn list_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))? {
        let path = entry.map_err(|e| HarnessError::io(dir, e))?.path();
        if path.is_dir() {
            list_files(root, &path, out)?;
        } else if let Ok(rel) = path.strip_prefix(root) {
            let rel = rel.to_string_lossy().replace('\\', "/");
            if rel != MANIFEST {
                out.push(rel);
            }
        }
    }
    Ok(())
}

/// Writes `manifest.json` listing every file in `dir`.
pub fn finish(dir: &Path, scenario: &Scenario, command: &str, summary: Value) -> Result<Manifest> {
    let mut files = Vec::new();
    list_files(dir, dir, &mut files)?;
    files.sort();
    let manifest = Manifest {
        command: command.to_string(),
        scenario_hash: scenario.hash(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        noise_level: scenario.noise_level(),
        seed: scenario.seed(),
        files,
        summary,
    };
    let path = dir.join(MANIFEST);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| HarnessError::io(&path, e))?;
    Ok(manifest)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| HarnessError::io(path, e))
}

/// Runs one experiment end to end and returns its manifest.
pub fn run(experiment: Experiment, scenario: &Scenario, out: &Path) -> Result<Manifest> {
    let command = experiment.command();
    ensure_admitted(scenario, command)?;
    let setup = Setup::new(scenario)?;
    let dir = prepare(out, scenario, command)?;
    write_mask(&dir.join("mask"), &setup.grid, &setup.mask)?;
    let summary = match experiment {
        Experiment::Simulate => simulate(scenario, &setup, &dir)?,
        Experiment::Dnmap => dnmap(scenario, &setup, &dir)?,
        Experiment::Probe => probe(scenario, &setup, &dir)?,
        Experiment::Runge => runge(scenario, &setup, &dir)?,
        Experiment::RecoverNonlinearity => nonlinearity(scenario, &setup, &dir)?,
        Experiment::RecoverInitial => initial(scenario, &setup, &dir)?,
        Experiment::RecoverPotential => potential(scenario, &setup, &dir)?,
    };
    finish(&dir, scenario, command, summary)
}

fn simulate(scenario: &Scenario, setup: &Setup, dir: &Path) -> Result<Value> {
    let Setup {
        grid,
        mask,
        spec,
        u0,
        u1,
        cfg,
    } = setup;
    let phi = match scenario.choice("simulate.drive") {
        "input" => scenario.input(grid, mask)?.data(),
        _ => SpaceTimeField::zeros(grid),
    };
    let h = SpaceTimeField::zeros(grid);
    let traj = solve_with_exterior(grid, mask, spec, &h, u0, u1, &phi, cfg)?;
    fw_io::write_trajectory(dir, grid, &traj)?;
    let energy = traj.energy_log.last().map(|r| r.total()).unwrap_or(0.0);
    Ok(json!({
        "max_abs_u": traj.u.max_abs(),
        "final_energy": energy,
        "max_energy_residual": max_step_residual(&traj.energy_log),
        "max_picard_ratio": traj.max_picard_ratio(),
        "slabs": traj.picard_log.len(),
        "bisections": traj.total_bisections(),
    }))
}

/// Passive input followed by `dnmap.basis` cosine modes across the extent of `w1`.
pub fn dn_basis(scenario: &Scenario, grid: &Grid, mask: &RegionMask) -> Result<Vec<ExteriorInput>> {
    let xs: Vec<f64> = mask.w1_nodes().iter().map(|&i| grid.node_coordinates(i)[0]).collect();
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo).max(grid.spacing());
    let time = profile(scenario.choice("input.profile"), grid.final_time());
    let amplitude = scenario.real("input.amplitude");
    let mut inputs = vec![ExteriorInput::passive(grid, "passive")];
    for k in 0..scenario.int("dnmap.basis") {
        let shape = ScalarField::from_fn(grid, |x| (k as f64 * std::f64::consts::PI * (x[0] - lo) / width).cos())
            .restricted(mask.w1());
        let raw = SpaceTimeField::separable(grid, &shape, &time);
        inputs.push(ExteriorInput::smoothed(grid, mask, &raw, amplitude, format!("cosine_{k}"))?);
    }
    Ok(inputs)
}

fn dnmap(scenario: &Scenario, setup: &Setup, dir: &Path) -> Result<Value> {
    let oracle = setup.oracle(scenario)?;
    let inputs = dn_basis(scenario, &setup.grid, &setup.mask)?;
    let records = inputs
        .par_iter()
        .map(|input| oracle.measure(input))
        .collect::<fracwave::Result<Vec<_>>>()?;
    dn_io::write_matrix(&dir.join("matrix"), &setup.grid, &setup.mask, &records)?;
    let columns: Vec<Value> = records
        .iter()
        .map(|r| json!({"label": r.input.label(), "trace_norm": trace_norm(&r.trace, &setup.mask)}))
        .collect();
    Ok(json!({ "columns": columns }))
}

fn probe(scenario: &Scenario, setup: &Setup, dir: &Path) -> Result<Value> {
    let input = scenario.input(&setup.grid, &setup.mask)?;
    let epsilons = scenario.reals("probe.epsilons");
    let result = linearization_probe(&setup.grid, &setup.mask, &setup.spec, &input, &epsilons, &setup.cfg)?;
    write_rows(&dir.join("remainders.csv"), &result.remainder_norms)?;
    write_spacetime(&dir.join("v_ref"), &setup.grid, &result.v_ref, "linear_reference")?;
    let expected = (!setup.spec.is_zero() && setup.spec.is_homogeneous()).then(|| setup.spec.r() + 1.0);
    Ok(json!({
        "fitted_slope": result.fitted_slope,
        "expected_slope": expected,
        "fit_residual": result.fit_residual,
        "remainders": result.remainder_norms,
    }))
}

/// Potential of the linear part seen by the control problem.
fn linear_potential(setup: &Setup) -> ScalarField {
    setup
        .spec
        .as_linear_potential()
        .cloned()
        .unwrap_or_else(|| ScalarField::zeros(&setup.grid))
}

fn runge(scenario: &Scenario, setup: &Setup, dir: &Path) -> Result<Value> {
    let target = scenario.runge_target(&setup.grid, &setup.mask);
    let outcomes = runge_sweep(
        &target,
        &scenario.reals("runge.alphas"),
        scenario.int("runge.iters"),
        scenario.real("runge.grad_tol"),
        &setup.grid,
        &setup.mask,
        &linear_potential(setup),
        &setup.cfg,
    )?;
    let table = sweep_table(&outcomes);
    write_runge(dir, &setup.grid, &outcomes, &table)?;
    let best = table.iter().map(|r| r.achieved_error).fold(f64::INFINITY, f64::min);
    let monotone = table.windows(2).all(|w| w[1].achieved_error <= w[0].achieved_error);
    Ok(json!({
        "sweep": table,
        "best_error": best,
        "non_increasing": monotone,
    }))
}

/// `f(x, 1)` of the hidden spec on the interior.
fn truth_at_one(setup: &Setup) -> Result<ScalarField> {
    let mut values = vec![0.0; setup.grid.len()];
    for &i in setup.mask.omega_nodes() {
        values[i] = setup.spec.value(i, 1.0)?;
    }
    Ok(ScalarField::from_values(&setup.grid, values)?)
}

fn nonlinearity(scenario: &Scenario, setup: &Setup, dir: &Path) -> Result<Value> {
    let oracle = setup.oracle(scenario)?;
    let settings = scenario.recovery_settings();
    let result = recover_nonlinearity(&oracle, scenario.opt_real("recovery.r_known"), &settings, &setup.cfg)?;
    write_recovery(dir, &setup.grid, &result)?;
    let truth = truth_at_one(setup)?;
    let mut summary = serde_json::to_value(result.summary())?;
    summary["f_relative_error"] = json!(setup.interior_error(&result.f_at_one, &truth));
    summary["r_true"] = match setup.spec.kind() {
        NonlinearityKind::Power { .. } => json!(setup.spec.r()),
        _ => Value::Null,
    };
    Ok(summary)
}

fn initial(scenario: &Scenario, setup: &Setup, dir: &Path) -> Result<Value> {
    let oracle = setup.oracle(scenario)?;
    let passive = oracle.measure(&ExteriorInput::passive(&setup.grid, "passive"))?;
    let result = recover_initial_data(
        &passive,
        &setup.grid,
        &setup.mask,
        &setup.spec,
        scenario.real("initial_data.alpha"),
        &setup.cfg,
    )?;
    write_initial(dir, &setup.grid, &result)?;
    let mut summary = setup.initial_errors(&result.u0, &result.u1);
    summary["relative_misfit"] = json!(result.relative_misfit);
    summary["alpha"] = json!(result.alpha);
    summary["outer_steps"] = json!(result.outer_steps);
    summary["warnings"] = json!(result.warnings);
    Ok(summary)
}

fn potential(scenario: &Scenario, setup: &Setup, dir: &Path) -> Result<Value> {
    let oracle = setup.oracle(scenario)?;
    let result = recover_potential(
        &oracle,
        scenario.real("potential.alpha"),
        &scenario.potential_settings(),
        &setup.cfg,
    )?;
    write_potential(dir, &setup.grid, &result)?;
    let mut summary = setup.initial_errors(&result.initial_final.u0, &result.initial_final.u1);
    summary["a_relative_error"] = json!(setup
        .spec
        .as_linear_potential()
        .and_then(|a| setup.interior_error(&result.a, a)));
    summary["relative_misfit"] = json!(result.relative_misfit);
    summary["gauss_newton_steps"] = json!(result.gauss_newton_steps);
    summary["probe_errors"] = json!(result.probe_errors);
    Ok(summary)
}
