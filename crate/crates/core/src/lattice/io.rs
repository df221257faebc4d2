//! Binary field dumps: raw little-endian `f64` in row-major order (time-major for
//! space-time fields) plus a sidecar JSON header. Masks use one byte per node.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::field::{ScalarField, SpaceTimeField};
use super::grid::{Grid, GridParams};
use super::mask::RegionMask;
use crate::error::{Error, Result};

/// Sidecar header shared by field and mask dumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub n: usize,
    #[serde(rename = "N")]
    pub points: usize,
    #[serde(rename = "L")]
    pub box_length: f64,
    pub s: f64,
    pub dt: f64,
    pub nt: usize,
    pub role: String,
}

impl FieldHeader {
    pub fn new(grid: &Grid, role: &str) -> Self {
        let p = grid.params();
        Self {
            n: p.dim,
            points: p.points,
            box_length: p.box_length,
            s: p.order,
            dt: p.dt,
            nt: p.steps,
            role: role.to_string(),
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(GridParams {
            dim: self.n,
            points: self.points,
            box_length: self.box_length,
            order: self.s,
            dt: self.dt,
            steps: self.nt,
        })
    }
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut name = stem.as_os_str().to_owned();
    name.push(ext);
    PathBuf::from(name)
}

fn write_header(stem: &Path, header: &FieldHeader) -> Result<()> {
    fs::write(
        with_ext(stem, ".json"),
        serde_json::to_string_pretty(header)?,
    )?;
    Ok(())
}

pub fn read_header(stem: &Path) -> Result<FieldHeader> {
    Ok(serde_json::from_str(&fs::read_to_string(with_ext(
        stem, ".json",
    ))?)?)
}

/// Writes raw values to `<stem>.f64` and the header to `<stem>.json`.
pub fn write_raw(stem: &Path, header: &FieldHeader, values: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(with_ext(stem, ".f64"), bytes)?;
    write_header(stem, header)
}

pub fn read_raw(stem: &Path) -> Result<(FieldHeader, Vec<f64>)> {
    let header = read_header(stem)?;
    let bytes = fs::read(with_ext(stem, ".f64"))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::InvalidArgument(format!(
            "{}: byte length {} is not a multiple of 8",
            stem.display(),
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((header, values))
}

pub fn write_field(stem: &Path, grid: &Grid, field: &ScalarField, role: &str) -> Result<()> {
    write_raw(stem, &FieldHeader::new(grid, role), field.values())
}

pub fn read_field(stem: &Path) -> Result<(Grid, ScalarField)> {
    let (header, values) = read_raw(stem)?;
    let grid = header.grid()?;
    let field = ScalarField::from_values(&grid, values)?;
    Ok((grid, field))
}

pub fn write_spacetime(stem: &Path, grid: &Grid, field: &SpaceTimeField, role: &str) -> Result<()> {
    write_raw(stem, &FieldHeader::new(grid, role), &field.flatten())
}

/// Reads a space-time dump; the frame count is inferred from the file size.
pub fn read_spacetime(stem: &Path) -> Result<(Grid, SpaceTimeField)> {
    let (header, values) = read_raw(stem)?;
    let grid = header.grid()?;
    if values.len() % grid.len() != 0 {
        return Err(Error::InvalidArgument(format!(
            "{}: {} values do not split into frames of {}",
            stem.display(),
            values.len(),
            grid.len()
        )));
    }
    let frames = values
        .chunks_exact(grid.len())
        .map(|c| ScalarField::from_values(&grid, c.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let field = SpaceTimeField::from_frames(&grid, frames)?;
    Ok((grid, field))
}

/// Writes `<dir>/mask_{omega,w1,w2}.u8` with JSON headers.
pub fn write_mask(dir: &Path, grid: &Grid, mask: &RegionMask) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (name, ind) in [
        ("omega", mask.omega()),
        ("w1", mask.w1()),
        ("w2", mask.w2()),
    ] {
        let stem = dir.join(format!("mask_{name}"));
        let bytes: Vec<u8> = ind.iter().map(|&b| b as u8).collect();
        fs::write(with_ext(&stem, ".u8"), bytes)?;
        write_header(&stem, &FieldHeader::new(grid, &format!("mask_{name}")))?;
    }
    Ok(())
}

pub fn read_mask(dir: &Path) -> Result<(Grid, RegionMask)> {
    let mut inds = Vec::new();
    let mut grid = None;
    for name in ["omega", "w1", "w2"] {
        let stem = dir.join(format!("mask_{name}"));
        let header = read_header(&stem)?;
        let bytes = fs::read(with_ext(&stem, ".u8"))?;
        inds.push(bytes.iter().map(|&b| b != 0).collect::<Vec<bool>>());
        grid = Some(header.grid()?);
    }
    let grid = grid.expect("three headers read");
    let w2 = inds.pop().expect("w2");
    let w1 = inds.pop().expect("w1");
    let omega = inds.pop().expect("omega");
    let mask = RegionMask::from_indicators(&grid, omega, w1, w2)?;
    Ok((grid, mask))
}
