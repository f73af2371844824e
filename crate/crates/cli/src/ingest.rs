//! CSV to `Dataset`.

use std::path::Path;

use anyhow::{bail, Context};
use mecop::model::{Dataset, Design};
use serde::{Deserialize, Serialize};

/// Which CSV columns feed the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub outcome: String,
    pub treatment: String,
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default)]
    pub outcome_age: Option<String>,
    #[serde(default)]
    pub treatment_age: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    pub log_outcome: bool,
    pub log_treatment: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub rows_read: usize,
    pub rows_kept: usize,
    /// Rows with a missing value in some mapped column.
    pub dropped: usize,
}

/// Raised for problems with the input data itself, as opposed to usage.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct DataError(pub String);

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "NA" | "na" | "NaN" | "." | "null")
}

/// Read `path` with the given delimiter and mapping. Rows with a missing
/// mapped cell are dropped and counted; anything else unparseable is an error
/// naming the row (1-based, header excluded) and column.
pub fn ingest(
    path: &Path,
    delimiter: u8,
    mapping: &ColumnMapping,
    transform: Transform,
) -> anyhow::Result<(Dataset, IngestSummary)> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let headers = reader.headers().map_err(|e| DataError(format!("reading header: {e}")))?.clone();
    let find = |name: &str| -> anyhow::Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError(format!("column '{name}' not found in {}", path.display())).into())
    };

    let y_col = find(&mapping.outcome)?;
    let t_col = find(&mapping.treatment)?;
    let x_cols = mapping.covariates.iter().map(|c| find(c)).collect::<anyhow::Result<Vec<_>>>()?;
    let ay_col = mapping.outcome_age.as_deref().map(find).transpose()?;
    let at_col = mapping.treatment_age.as_deref().map(find).transpose()?;

    let mut y = Vec::new();
    let mut t = Vec::new();
    let mut xs: Vec<Vec<f64>> = vec![Vec::new(); x_cols.len()];
    let mut age_y = Vec::new();
    let mut age_t = Vec::new();
    let mut rows_read = 0;
    let mut dropped = 0;

    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| DataError(format!("row {row}: {e}")))?;
        rows_read += 1;
        let mut cols = vec![y_col, t_col];
        cols.extend(&x_cols);
        cols.extend(ay_col);
        cols.extend(at_col);
        if cols.iter().any(|&c| record.get(c).is_none_or(is_missing)) {
            dropped += 1;
            continue;
        }
        let num = |c: usize| -> anyhow::Result<f64> {
            let cell = &record[c];
            let v: f64 = cell
                .parse()
                .map_err(|_| DataError(format!("row {row}, column '{}': '{cell}' is not numeric", &headers[c])))?;
            if !v.is_finite() {
                bail!(DataError(format!("row {row}, column '{}': non-finite value", &headers[c])));
            }
            Ok(v)
        };
        let logged = |c: usize, take_log: bool| -> anyhow::Result<f64> {
            let v = num(c)?;
            if !take_log {
                return Ok(v);
            }
            if v <= 0.0 {
                bail!(DataError(format!(
                    "row {row}, column '{}': cannot take the log of {v}",
                    &headers[c]
                )));
            }
            Ok(v.ln())
        };
        let age = |c: usize| -> anyhow::Result<i64> {
            let v = num(c)?;
            if v.fract() != 0.0 {
                bail!(DataError(format!("row {row}, column '{}': age {v} is not a whole number", &headers[c])));
            }
            Ok(v as i64)
        };
        y.push(logged(y_col, transform.log_outcome)?);
        t.push(logged(t_col, transform.log_treatment)?);
        for (dst, &c) in xs.iter_mut().zip(&x_cols) {
            dst.push(num(c)?);
        }
        if let Some(c) = ay_col {
            age_y.push(age(c)?);
        }
        if let Some(c) = at_col {
            age_t.push(age(c)?);
        }
    }

    if y.is_empty() {
        bail!(DataError(format!(
            "no usable rows in {} ({rows_read} read, {dropped} dropped for missing values)",
            path.display()
        )));
    }
    let columns: Vec<&[f64]> = xs.iter().map(|c| c.as_slice()).collect();
    let design = if columns.is_empty() {
        Design::intercept(y.len())
    } else {
        Design::with_intercept(&columns)?
    };
    let n = y.len();
    let data = Dataset::new(y, t, design)?
        .with_ages(ay_col.map(|_| age_y), at_col.map(|_| age_t))
        .map_err(|e| DataError(e.to_string()))?;
    Ok((
        data,
        IngestSummary {
            rows_read,
            rows_kept: n,
            dropped,
        },
    ))
}
