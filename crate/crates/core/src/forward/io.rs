//! Trajectory directories: `u` and `ut` in the lattice binary format,
//! `energy_log.csv` and `picard_log.csv`.
//!
//! `energy_log.csv` columns: `level,time,kinetic,elastic,potential,work,dissipation,residual`.
//! `picard_log.csv` columns: `start_level,steps,iterations,converged,max_ratio,bisections,ratios`
//! with `ratios` a `;`-separated list.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::energy::EnergyRecord;
use super::solve::{SlabRecord, Trajectory};
use crate::error::{Error, Result};
use crate::lattice::io::{read_spacetime, write_spacetime};
use crate::lattice::Grid;

#[derive(Serialize, Deserialize)]
struct SlabRow {
    start_level: usize,
    steps: usize,
    iterations: usize,
    converged: bool,
    max_ratio: f64,
    bisections: usize,
    ratios: String,
}

fn csv_error(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv: {e}"))
}

pub fn write_trajectory(dir: &Path, grid: &Grid, traj: &Trajectory) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_spacetime(&dir.join("u"), grid, &traj.u, "u")?;
    write_spacetime(&dir.join("ut"), grid, &traj.ut, "ut")?;

    let mut energy = csv::Writer::from_path(dir.join("energy_log.csv")).map_err(csv_error)?;
    for rec in &traj.energy_log {
        energy.serialize(rec).map_err(csv_error)?;
    }
    energy.flush()?;

    let mut picard = csv::Writer::from_path(dir.join("picard_log.csv")).map_err(csv_error)?;
    if traj.picard_log.is_empty() {
        picard
            .write_record([
                "start_level",
                "steps",
                "iterations",
                "converged",
                "max_ratio",
                "bisections",
                "ratios",
            ])
            .map_err(csv_error)?;
    }
    for rec in &traj.picard_log {
        let ratios: Vec<String> = rec.ratios.iter().map(|r| format!("{r:e}")).collect();
        picard
            .serialize(SlabRow {
                start_level: rec.start_level,
                steps: rec.steps,
                iterations: rec.iterations,
                converged: rec.converged,
                max_ratio: rec.max_ratio,
                bisections: rec.bisections,
                ratios: ratios.join(";"),
            })
            .map_err(csv_error)?;
    }
    picard.flush()?;
    Ok(())
}

pub fn read_trajectory(dir: &Path) -> Result<(Grid, Trajectory)> {
    let (grid, u) = read_spacetime(&dir.join("u"))?;
    let (_, ut) = read_spacetime(&dir.join("ut"))?;
    let energy_log = csv::Reader::from_path(dir.join("energy_log.csv"))
        .map_err(csv_error)?
        .deserialize()
        .collect::<std::result::Result<Vec<EnergyRecord>, _>>()
        .map_err(csv_error)?;
    let picard_log = csv::Reader::from_path(dir.join("picard_log.csv"))
        .map_err(csv_error)?
        .deserialize::<SlabRow>()
        .map(|row| {
            let row = row.map_err(csv_error)?;
            let ratios = row
                .ratios
                .split(';')
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|e| Error::InvalidArgument(format!("ratio '{s}': {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SlabRecord {
                start_level: row.start_level,
                steps: row.steps,
                iterations: row.iterations,
                converged: row.converged,
                ratios,
                max_ratio: row.max_ratio,
                bisections: row.bisections,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((
        grid,
        Trajectory {
            u,
            ut,
            energy_log,
            picard_log,
        },
    ))
}
