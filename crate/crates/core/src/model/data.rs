use std::collections::BTreeSet;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary-response data set: labels in {-1, +1} and an `n × p` design.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub column_names: Vec<String>,
    /// Column 0 is a column of ones that is never transformed.
    pub intercept: bool,
    /// Present once `standardize` has been applied.
    pub standardization: Option<Standardization>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Intercept,
    Binary,
    Continuous,
}

/// `x_standardized = (x_raw - center) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnTransform {
    pub name: String,
    pub kind: ColumnKind,
    pub center: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub columns: Vec<ColumnTransform>,
}

impl Standardization {
    /// Coefficients on the raw covariate scale from coefficients fitted on
    /// the standardized design.
    pub fn to_raw_coefficients(&self, beta: &DVector<f64>) -> DVector<f64> {
        let mut raw = DVector::zeros(beta.len());
        let mut offset = 0.0;
        let mut intercept = None;
        for (j, c) in self.columns.iter().enumerate() {
            match c.kind {
                ColumnKind::Intercept => {
                    raw[j] = beta[j];
                    intercept = Some(j);
                }
                _ => {
                    raw[j] = beta[j] / c.scale;
                    offset += raw[j] * c.center;
                }
            }
        }
        if let Some(j) = intercept {
            raw[j] -= offset;
        }
        raw
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl Dataset {
    pub fn new(y: DVector<f64>, x: DMatrix<f64>, column_names: Vec<String>, intercept: bool) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Validation(format!(
                "{} labels but {} design rows",
                y.len(),
                x.nrows()
            )));
        }
        if x.ncols() == 0 {
            return Err(Error::Validation("design has no columns".into()));
        }
        if column_names.len() != x.ncols() {
            return Err(Error::Validation("column name count does not match design".into()));
        }
        if let Some(i) = y.iter().position(|v| *v != 1.0 && *v != -1.0) {
            return Err(Error::Validation(format!("label {} at row {} is not -1 or +1", y[i], i + 1)));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("design contains non-finite entries".into()));
        }
        if intercept && x.column(0).iter().any(|v| *v != 1.0) {
            return Err(Error::Validation("declared intercept column is not all ones".into()));
        }
        Ok(Dataset {
            y,
            x,
            column_names,
            intercept,
            standardization: None,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_standardized(&self) -> bool {
        self.standardization.is_some()
    }

    /// Keep only the listed columns (in the given order).
    pub fn select_columns(&self, columns: &[usize]) -> Dataset {
        let x = self.x.select_columns(columns);
        Dataset {
            y: self.y.clone(),
            x,
            column_names: columns.iter().map(|&j| self.column_names[j].clone()).collect(),
            intercept: self.intercept && columns.first() == Some(&0),
            standardization: self.standardization.as_ref().map(|s| Standardization {
                columns: columns.iter().map(|&j| s.columns[j].clone()).collect(),
            }),
        }
    }
}

/// Read a labelled CSV file.
///
/// The label column defaults to the first column; labels may be coded
/// {0, 1} or {-1, +1}. With `intercept`, a column of ones named
/// `(Intercept)` is prepended.
pub fn ingest_csv(path: impl AsRef<Path>, label_column: Option<&str>, intercept: bool) -> Result<Dataset> {
    let mut text = String::new();
    File::open(path.as_ref())?.read_to_string(&mut text)?;
    parse_csv(&text, label_column, intercept)
}

pub fn parse_csv(text: &str, label_column: Option<&str>, intercept: bool) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let label_idx = match label_column {
        None => 0,
        Some(name) => headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Validation(format!("label column `{name}` not found")))?,
    };
    if headers.len() < 2 && !intercept {
        return Err(Error::Validation("no covariate columns".into()));
    }

    let mut labels = Vec::new();
    let mut values = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                row,
                column: record.len().min(headers.len()) + 1,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for (c, field) in record.iter().enumerate() {
            if field.is_empty() {
                return Err(Error::Parse {
                    row,
                    column: c + 1,
                    message: "missing value".into(),
                });
            }
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                row,
                column: c + 1,
                message: format!("`{field}` is not numeric"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: c + 1,
                    message: format!("`{field}` is not finite"),
                });
            }
            if c == label_idx {
                labels.push(v);
            } else {
                values.push(v);
            }
        }
    }

    let distinct: BTreeSet<i64> = labels.iter().map(|v| *v as i64).collect();
    let exact = labels.iter().all(|v| v.fract() == 0.0);
    let y: Vec<f64> = if exact && distinct.iter().all(|v| *v == 0 || *v == 1) {
        labels.iter().map(|v| if *v == 0.0 { -1.0 } else { 1.0 }).collect()
    } else if exact && distinct.iter().all(|v| *v == -1 || *v == 1) {
        labels
    } else {
        let bad = labels
            .iter()
            .position(|v| !(*v == 0.0 || *v == 1.0 || *v == -1.0))
            .map(|i| format!("value {} at row {}", labels[i], i + 1))
            .unwrap_or_else(|| "labels mix {0,1} and {-1,+1} codings".into());
        return Err(Error::Validation(format!("invalid label: {bad}")));
    };

    let n = y.len();
    let covariates = headers.len() - 1;
    let p = covariates + usize::from(intercept);
    let mut x = DMatrix::zeros(n, p);
    let offset = usize::from(intercept);
    for i in 0..n {
        if intercept {
            x[(i, 0)] = 1.0;
        }
        for j in 0..covariates {
            x[(i, j + offset)] = values[i * covariates + j];
        }
    }
    let mut names = Vec::with_capacity(p);
    if intercept {
        names.push("(Intercept)".to_string());
    }
    names.extend(
        headers
            .iter()
            .enumerate()
            .filter(|(c, _)| *c != label_idx)
            .map(|(_, h)| h.clone()),
    );
    Dataset::new(DVector::from_vec(y), x, names, intercept)
}

fn sample_sd(col: &[f64], mean: f64) -> f64 {
    let n = col.len() as f64;
    (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Scale non-binary columns to mean 0 and standard deviation 0.5 and binary
/// columns (exactly two distinct values) to mean 0 and range 1.
pub fn standardize(data: &Dataset) -> Result<Dataset> {
    if data.is_standardized() {
        return Err(Error::Validation("dataset is already standardized".into()));
    }
    let n = data.n_obs();
    let mut x = data.x.clone();
    let mut columns = Vec::with_capacity(data.dim());
    for j in 0..data.dim() {
        let name = data.column_names[j].clone();
        if data.intercept && j == 0 {
            columns.push(ColumnTransform {
                name,
                kind: ColumnKind::Intercept,
                center: 0.0,
                scale: 1.0,
            });
            continue;
        }
        let col: Vec<f64> = data.x.column(j).iter().copied().collect();
        let mut distinct: Vec<f64> = col.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        let mean = col.iter().sum::<f64>() / n as f64;
        let (kind, scale) = match distinct.len() {
            0 | 1 => return Err(Error::DegenerateColumn(name)),
            2 => (ColumnKind::Binary, distinct[1] - distinct[0]),
            _ => {
                let sd = sample_sd(&col, mean);
                if !(sd > 0.0) {
                    return Err(Error::DegenerateColumn(name));
                }
                (ColumnKind::Continuous, 2.0 * sd)
            }
        };
        for i in 0..n {
            x[(i, j)] = (x[(i, j)] - mean) / scale;
        }
        columns.push(ColumnTransform {
            name,
            kind,
            center: mean,
            scale,
        });
    }
    Ok(Dataset {
        y: data.y.clone(),
        x,
        column_names: data.column_names.clone(),
        intercept: data.intercept,
        standardization: Some(Standardization { columns }),
    })
}

/// Write the design and labels back out as CSV (labels coded -1/+1, first column).
pub fn write_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["y".to_string()];
    header.extend(data.column_names.iter().cloned());
    w.write_record(&header)?;
    for i in 0..data.n_obs() {
        let mut row = vec![format!("{}", data.y[i])];
        row.extend((0..data.dim()).map(|j| format!("{}", data.x[(i, j)])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
