//! Persistence of reconstruction results: lattice fields, a JSON summary and
//! CSV histories.
//!
//! `history.csv` columns: `iteration,objective,gradient_norm,step`.

use std::fs;
use std::path::Path;

use serde::Serialize;

use super::control::{RungeOutcome, SweepRow};
use super::initial::InitialDataRecovery;
use super::optim::IterationRecord;
use super::potential::PotentialRecovery;
use super::recovery::RecoveryResult;
use crate::error::Result;
use crate::lattice::io::{write_field, write_spacetime};
use crate::lattice::Grid;

/// The header is written even for an empty history, e.g. after an exact
/// linear solve.
pub fn write_history(path: &Path, history: &[IterationRecord]) -> Result<()> {
    if history.is_empty() {
        fs::write(path, "iteration,objective,gradient_norm,step\n")?;
        return Ok(());
    }
    write_rows(path, history)
}

/// Any serializable rows as CSV with a header line.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> crate::error::Error {
    crate::error::Error::Io(std::io::Error::other(e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

pub fn write_recovery(dir: &Path, grid: &Grid, result: &RecoveryResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_field(&dir.join("f_at_one"), grid, &result.f_at_one, "f_at_one")?;
    write_json(&dir.join("summary.json"), &result.summary())?;
    write_history(&dir.join("history.csv"), &result.residual_history)?;
    write_rows(&dir.join("remainders.csv"), &result.remainders)?;
    write_rows(&dir.join("alpha_sweep.csv"), &result.alpha_table)?;
    write_spacetime(&dir.join("control_phi"), grid, result.control.input.phi(), "control")?;
    write_spacetime(&dir.join("control_v"), grid, &result.control.v, "interior_solution")?;
    write_spacetime(&dir.join("linear_reference"), grid, &result.linear_reference, "linear_reference")
}

#[derive(Serialize)]
struct InitialSummary<'a> {
    alpha: f64,
    relative_misfit: f64,
    outer_steps: usize,
    iterations: usize,
    warnings: &'a [String],
}

pub fn write_initial(dir: &Path, grid: &Grid, result: &InitialDataRecovery) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_field(&dir.join("u0"), grid, &result.u0, "u0")?;
    write_field(&dir.join("u1"), grid, &result.u1, "u1")?;
    write_json(
        &dir.join("summary.json"),
        &InitialSummary {
            alpha: result.alpha,
            relative_misfit: result.relative_misfit,
            outer_steps: result.outer_steps,
            iterations: result.history.len(),
            warnings: &result.warnings,
        },
    )?;
    write_history(&dir.join("history.csv"), &result.history)
}

#[derive(Serialize)]
struct PotentialSummary<'a> {
    alpha: f64,
    relative_misfit: f64,
    gauss_newton_steps: usize,
    iterations: usize,
    probe_errors: &'a [f64],
    initial_relative_misfit: f64,
}

pub fn write_potential(dir: &Path, grid: &Grid, result: &PotentialRecovery) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_field(&dir.join("a"), grid, &result.a, "potential")?;
    write_initial(&dir.join("initial_guess"), grid, &result.initial_guess)?;
    write_initial(&dir.join("initial_final"), grid, &result.initial_final)?;
    write_json(
        &dir.join("summary.json"),
        &PotentialSummary {
            alpha: result.regularization_used,
            relative_misfit: result.relative_misfit,
            gauss_newton_steps: result.gauss_newton_steps,
            iterations: result.history.len(),
            probe_errors: &result.probe_errors,
            initial_relative_misfit: result.initial_final.relative_misfit,
        },
    )?;
    write_history(&dir.join("history.csv"), &result.history)
}

/// Writes the sweep table and, for the last outcome, the control, the
/// interior solution and its optimizer history.
pub fn write_runge(dir: &Path, grid: &Grid, outcomes: &[RungeOutcome], table: &[SweepRow]) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_rows(&dir.join("sweep.csv"), table)?;
    write_json(&dir.join("summary.json"), &table)?;
    if let Some(last) = outcomes.last() {
        write_spacetime(&dir.join("phi"), grid, last.input.phi(), "control")?;
        write_spacetime(&dir.join("v"), grid, &last.v, "interior_solution")?;
        write_history(&dir.join("history.csv"), &last.report.history)?;
    }
    Ok(())
}
