//! Results CSV and its JSONL sidecar.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use poolforge::advisor::average_curves;
use poolforge::{LearningCurve, Method, Mode, RunResult};
use serde::{Deserialize, Serialize};

pub const HEADER: &str = "method,mode,seed,cycle,labeled,accuracy,wall_time_s";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: Method,
    pub mode: Mode,
    pub seed: u64,
    pub cycle: usize,
    pub labeled: usize,
    pub accuracy: f64,
    pub wall_time_s: f64,
}

pub fn rows_of(result: &RunResult, seed: u64) -> Vec<ResultRow> {
    result
        .records
        .iter()
        .map(|r| ResultRow {
            method: r.method,
            mode: r.mode,
            seed,
            cycle: r.cycle,
            labeled: r.labeled_count,
            accuracy: r.test_accuracy,
            wall_time_s: r.wall_time,
        })
        .collect()
}

/// Writes the header only when the file is new or empty.
pub fn write_rows(path: &Path, rows: &[ResultRow], append: bool) -> Result<()> {
    let fresh = !append || std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = if append {
        OpenOptions::new().create(true).append(true).open(path)
    } else {
        File::create(path)
    }
    .with_context(|| format!("opening {}", path.display()))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if fresh {
        w.write_record(HEADER.split(','))?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != HEADER {
        bail!("{}: expected header `{HEADER}`", path.display());
    }
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

/// Groups rows by (mode, method, seed) into per-run curves.
pub fn curves_by_run(rows: &[ResultRow]) -> Result<BTreeMap<(Mode, Method, u64), LearningCurve>> {
    let mut grouped: BTreeMap<(Mode, Method, u64), Vec<&ResultRow>> = BTreeMap::new();
    for row in rows {
        grouped.entry((row.mode, row.method, row.seed)).or_default().push(row);
    }
    grouped
        .into_iter()
        .map(|(key, mut rs)| {
            rs.sort_by_key(|r| r.labeled);
            let curve = LearningCurve::new(
                rs.iter().map(|r| r.labeled).collect(),
                rs.iter().map(|r| r.accuracy).collect(),
                key.1,
                key.0,
            )
            .with_context(|| format!("{} {} seed {}", key.0, key.1, key.2))?;
            Ok((key, curve))
        })
        .collect()
}

/// Seed-averaged curve per (mode, method).
pub fn mean_curves(rows: &[ResultRow]) -> Result<BTreeMap<(Mode, Method), LearningCurve>> {
    let mut grouped: BTreeMap<(Mode, Method), Vec<LearningCurve>> = BTreeMap::new();
    for ((mode, method, _), curve) in curves_by_run(rows)? {
        grouped.entry((mode, method)).or_default().push(curve);
    }
    grouped
        .into_iter()
        .map(|(key, curves)| Ok((key, average_curves(&curves).with_context(|| format!("{} {}", key.0, key.1))?)))
        .collect()
}

/// One line of the JSONL sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub method: Method,
    pub mode: Mode,
    pub seed: u64,
    pub config_fingerprint: String,
    pub data_fingerprint: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub siam_final_loss: Option<f64>,
}

pub fn write_entries(path: &Path, entries: &[RunEntry], append: bool) -> Result<()> {
    let mut file = if append {
        OpenOptions::new().create(true).append(true).open(path)
    } else {
        File::create(path)
    }
    .with_context(|| format!("opening {}", path.display()))?;
    for e in entries {
        serde_json::to_writer(&mut file, e)?;
        file.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_entries(path: &Path) -> Result<Vec<RunEntry>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    BufReader::new(file)
        .lines()
        .filter(|l| l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true))
        .map(|l| Ok(serde_json::from_str(&l?)?))
        .collect()
}
