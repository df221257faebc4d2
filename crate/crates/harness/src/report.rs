//! `fracwave report`: collects every run below an output root from its
//! manifest alone, so no scenario file is needed.
//!
//! Writes into `<out>/report/`:
//! - `summary.csv` with columns `scenario_hash,command,metric,value`, one row
//!   per scalar in each manifest summary (nested keys joined with `.`,
//!   array entries indexed as `key.0`);
//! - `tables/<hash16>_<command>_<name>.csv`, a copy of every CSV a run wrote;
//! - `index.json`, the manifests themselves.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::error::{HarnessError, Result};
use crate::run::MANIFEST;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub scenario_hash: String,
    pub command: String,
    pub metric: String,
    pub value: String,
}

fn flatten(prefix: &str, value: &Value, out: &mut Vec<(String, String)>) {
    let join = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match value {
        Value::Object(map) => map.iter().for_each(|(k, v)| flatten(&join(k), v, out)),
        Value::Array(items) => items.iter().enumerate().for_each(|(i, v)| flatten(&join(&i.to_string()), v, out)),
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        Value::Null => out.push((prefix.to_string(), String::new())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// Run directories, i.e. directories holding a manifest, sorted by path.
fn run_dirs(out: &Path) -> Result<Vec<PathBuf>> {
    let mut found = Vec::new();
    let entries = fs::read_dir(out).map_err(|e| HarnessError::io(out, e))?;
    for scenario in entries {
        let scenario = scenario.map_err(|e| HarnessError::io(out, e))?.path();
        if !scenario.is_dir() || scenario.file_name().is_some_and(|n| n == "report") {
            continue;
        }
        for run in fs::read_dir(&scenario).map_err(|e| HarnessError::io(&scenario, e))? {
            let run = run.map_err(|e| HarnessError::io(&scenario, e))?.path();
            if run.join(MANIFEST).is_file() {
                found.push(run);
            }
        }
    }
    found.sort();
    Ok(found)
}

/// Builds the report and returns its directory and metric rows.
pub fn report(out: &Path) -> Result<(PathBuf, Vec<MetricRow>)> {
    let dir = out.join("report");
    let tables = dir.join("tables");
    fs::create_dir_all(&tables).map_err(|e| HarnessError::io(&tables, e))?;
    let mut rows = Vec::new();
    let mut manifests = Vec::new();
    for run in run_dirs(out)? {
        let path = run.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
        let manifest: Value = serde_json::from_str(&text)?;
        let hash = manifest["scenario_hash"].as_str().unwrap_or_default().to_string();
        let command = manifest["command"].as_str().unwrap_or_default().to_string();
        let mut metrics = Vec::new();
        flatten("", &manifest["summary"], &mut metrics);
        rows.extend(metrics.into_iter().map(|(metric, value)| MetricRow {
            scenario_hash: hash.clone(),
            command: command.clone(),
            metric,
            value,
        }));
        let short = &hash[..hash.len().min(16)];
        for file in manifest["files"].as_array().into_iter().flatten().filter_map(Value::as_str) {
            if file.ends_with(".csv") {
                let name = format!("{short}_{command}_{}", file.replace('/', "_"));
                let (from, to) = (run.join(file), tables.join(name));
                fs::copy(&from, &to).map_err(|e| HarnessError::io(&from, e))?;
            }
        }
        manifests.push(manifest);
    }
    fracwave::inverse::io::write_rows(&dir.join("summary.csv"), &rows)?;
    let index = dir.join("index.json");
    fs::write(&index, serde_json::to_string_pretty(&manifests)?).map_err(|e| HarnessError::io(&index, e))?;
    Ok((dir, rows))
}
