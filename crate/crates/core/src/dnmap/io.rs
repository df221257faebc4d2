//! Record directories: `input` (full lattice) and `trace_w2` (values on `w2`
//! nodes only, time-major) in the lattice binary format, optional `psi_<k>`
//! pairing basis fields, and `metadata.json`. A matrix is a directory of
//! `col_<k>` records plus `index.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DnRecord, ExteriorInput, PairingCache};
use crate::error::{Error, Result};
use crate::lattice::io::{read_raw, read_spacetime, write_raw, write_spacetime, FieldHeader};
use crate::lattice::{Grid, RegionMask, ScalarField, SpaceTimeField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMetadata {
    pub label: String,
    pub epsilon: f64,
    pub scenario_hash: String,
    pub mask_hash: String,
    pub grid: FieldHeader,
    pub w2_nodes: usize,
    pub pairings: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixColumn {
    pub label: String,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixIndex {
    pub scenario_hash: String,
    pub mask_hash: String,
    pub columns: Vec<MatrixColumn>,
}

pub fn write_record(dir: &Path, grid: &Grid, mask: &RegionMask, record: &DnRecord) -> Result<()> {
    if mask.hash() != record.mask_hash {
        return Err(Error::InvalidMask("record was measured on a different mask".into()));
    }
    fs::create_dir_all(dir)?;
    write_spacetime(&dir.join("input"), grid, record.input.phi(), "exterior_input")?;
    let w2 = mask.w2_nodes();
    let compact: Vec<f64> = record
        .trace
        .frames()
        .iter()
        .flat_map(|f| w2.iter().map(move |&i| f.values()[i]))
        .collect();
    write_raw(&dir.join("trace_w2"), &FieldHeader::new(grid, "trace_w2"), &compact)?;
    if let Some(cache) = &record.pairing_cache {
        for (k, psi) in cache.basis.iter().enumerate() {
            write_spacetime(&dir.join(format!("psi_{k}")), grid, psi, "pairing_basis")?;
        }
    }
    let meta = RecordMetadata {
        label: record.input.label().to_string(),
        epsilon: record.input.amplitude(),
        scenario_hash: record.provenance.clone(),
        mask_hash: record.mask_hash.clone(),
        grid: FieldHeader::new(grid, "dn_record"),
        w2_nodes: w2.len(),
        pairings: record.pairing_cache.as_ref().map(|c| c.values.clone()),
    };
    fs::write(dir.join("metadata.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn read_record(dir: &Path, mask: &RegionMask) -> Result<(Grid, DnRecord)> {
    let meta: RecordMetadata = serde_json::from_str(&fs::read_to_string(dir.join("metadata.json"))?)?;
    if meta.mask_hash != mask.hash() {
        return Err(Error::InvalidMask(format!(
            "record mask {} does not match supplied mask {}",
            meta.mask_hash,
            mask.hash()
        )));
    }
    let (grid, phi) = read_spacetime(&dir.join("input"))?;
    let (_, compact) = read_raw(&dir.join("trace_w2"))?;
    let w2 = mask.w2_nodes();
    if compact.len() != w2.len() * grid.levels() {
        return Err(Error::Shape {
            context: "trace_w2".into(),
            expected: w2.len() * grid.levels(),
            actual: compact.len(),
        });
    }
    let frames = compact
        .chunks_exact(w2.len())
        .map(|chunk| {
            let mut v = vec![0.0; grid.len()];
            for (&i, &x) in w2.iter().zip(chunk) {
                v[i] = x;
            }
            ScalarField::from_values(&grid, v)
        })
        .collect::<Result<Vec<_>>>()?;
    let trace = SpaceTimeField::from_frames(&grid, frames)?;
    let pairing_cache = match meta.pairings {
        Some(values) => {
            let basis = (0..values.len())
                .map(|k| read_spacetime(&dir.join(format!("psi_{k}"))).map(|(_, f)| f))
                .collect::<Result<Vec<_>>>()?;
            Some(PairingCache { basis, values })
        }
        None => None,
    };
    let input = ExteriorInput::new(&grid, mask, phi, meta.epsilon, meta.label)?;
    let record = DnRecord {
        input,
        trace,
        pairing_cache,
        provenance: meta.scenario_hash,
        mask_hash: meta.mask_hash,
    };
    Ok((grid, record))
}

pub fn write_matrix(dir: &Path, grid: &Grid, mask: &RegionMask, records: &[DnRecord]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut columns = Vec::with_capacity(records.len());
    for (k, rec) in records.iter().enumerate() {
        let name = format!("col_{k:03}");
        write_record(&dir.join(&name), grid, mask, rec)?;
        columns.push(MatrixColumn {
            label: rec.input.label().to_string(),
            path: name,
        });
    }
    let index = MatrixIndex {
        scenario_hash: records.first().map(|r| r.provenance.clone()).unwrap_or_default(),
        mask_hash: mask.hash(),
        columns,
    };
    fs::write(dir.join("index.json"), serde_json::to_string_pretty(&index)?)?;
    Ok(())
}

pub fn read_matrix(dir: &Path, mask: &RegionMask) -> Result<(Grid, Vec<DnRecord>)> {
    let index: MatrixIndex = serde_json::from_str(&fs::read_to_string(dir.join("index.json"))?)?;
    let mut grid = None;
    let mut records = Vec::with_capacity(index.columns.len());
    for col in &index.columns {
        let (g, rec) = read_record(&dir.join(&col.path), mask)?;
        grid = Some(g);
        records.push(rec);
    }
    let grid = grid.ok_or_else(|| Error::InvalidArgument("matrix index lists no columns".into()))?;
    Ok((grid, records))
}
