//! Sample persistence: a CSV with one draw per row and a JSON sidecar with
//! the run metadata. Wall-clock measurements are kept out of the sidecar so
//! that reruns with the same seed produce identical files.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::trace::ChainTrace;
use super::weighted::WeightedSample;
use crate::error::{Error, Result};

/// Path of the metadata file next to `csv`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

fn write_matrix(path: &Path, names: &[String], points: &DMatrix<f64>, extra: (&str, &[f64])) -> Result<()> {
    if names.len() != points.ncols() {
        return Err(Error::InvalidArgument("column names do not match sample dimension".into()));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = names.iter().map(String::as_str).collect();
    header.push(extra.0);
    w.write_record(&header)?;
    for (i, row) in points.row_iter().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        rec.push(format!("{:e}", extra.1[i]));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn write_sidecar(csv: &Path, meta: Map<String, Value>) -> Result<()> {
    fs::write(sidecar_path(csv), serde_json::to_string_pretty(&Value::Object(meta))?)?;
    Ok(())
}

/// Writes `points` plus a `log_weight` column, and the sidecar.
pub fn write_weighted(
    path: &Path,
    names: &[String],
    sample: &WeightedSample,
    seed: u64,
    mut meta: Map<String, Value>,
) -> Result<()> {
    write_matrix(path, names, &sample.points, ("log_weight", &sample.log_weights))?;
    meta.insert("kind".into(), json!("weighted"));
    meta.insert("seed".into(), json!(seed));
    meta.insert("n".into(), json!(sample.len()));
    meta.insert("columns".into(), json!(names));
    meta.insert("log_evidence".into(), json!(sample.log_evidence));
    meta.insert("ef".into(), json!(sample.ef));
    write_sidecar(path, meta)
}

/// Writes the retained states plus a `log_posterior` column, and the sidecar.
pub fn write_trace(
    path: &Path,
    names: &[String],
    trace: &ChainTrace,
    seed: u64,
    mut meta: Map<String, Value>,
) -> Result<()> {
    write_matrix(path, names, &trace.states, ("log_posterior", &trace.log_posterior))?;
    meta.insert("kind".into(), json!("trace"));
    meta.insert("seed".into(), json!(seed));
    meta.insert("n".into(), json!(trace.len()));
    meta.insert("columns".into(), json!(names));
    meta.insert("burn_in".into(), json!(trace.burn_in));
    meta.insert("acceptance_rate".into(), json!(trace.acceptance_rate));
    meta.insert("tuning".into(), Value::Object(trace.tuning.clone()));
    write_sidecar(path, meta)
}

/// Draws read back from a sample CSV: the last column is the log-weight or
/// log-posterior value.
#[derive(Debug, Clone)]
pub struct SampleFile {
    pub names: Vec<String>,
    pub points: DMatrix<f64>,
    pub last_column: String,
    pub values: Vec<f64>,
    pub meta: Value,
}

impl SampleFile {
    /// Interprets the file as a weighted sample (traces get equal weights).
    pub fn to_weighted(&self) -> WeightedSample {
        if self.last_column == "log_weight" {
            WeightedSample::new(self.points.clone(), self.values.clone())
        } else {
            WeightedSample::unweighted(self.points.clone())
        }
    }
}

pub fn read_samples(path: &Path) -> Result<SampleFile> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.len() < 2 {
        return Err(Error::Parse {
            row: 0,
            column: 0,
            message: "sample file needs at least one coefficient column".into(),
        });
    }
    let p = header.len() - 1;
    let mut data = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                row: i + 1,
                column: j,
                message: format!("not a number: `{field}`"),
            })?;
            if j < p {
                data.push(v);
            } else {
                values.push(v);
            }
        }
    }
    let n = values.len();
    let meta = match fs::read_to_string(sidecar_path(path)) {
        Ok(text) => serde_json::from_str(&text)?,
        Err(_) => Value::Null,
    };
    Ok(SampleFile {
        names: header[..p].to_vec(),
        points: DMatrix::from_row_slice(n, p, &data),
        last_column: header[p].clone(),
        values,
        meta,
    })
}

/// Wall-clock and CPU seconds spent in one stage of a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub wall_seconds: f64,
    pub cpu_seconds: f64,
}

pub fn write_timings(path: &Path, timings: &[Timing]) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(timings)?)?;
    Ok(())
}
