use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major `n x k` covariate matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Design {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidDataset(format!(
                "design data has {} entries, expected {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidDataset("ragged design rows".into()));
        }
        Self::new(rows.len(), cols, rows.iter().flatten().copied().collect())
    }

    /// Intercept column followed by the given covariate columns.
    pub fn with_intercept(columns: &[&[f64]]) -> Result<Self> {
        let n = columns.first().map_or(0, |c| c.len());
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidDataset("covariate columns differ in length".into()));
        }
        let k = columns.len() + 1;
        let mut data = Vec::with_capacity(n * k);
        for i in 0..n {
            data.push(1.0);
            data.extend(columns.iter().map(|c| c[i]));
        }
        Self::new(n, k, data)
    }

    /// Intercept-only design with `n` rows.
    pub fn intercept(n: usize) -> Self {
        Self {
            rows: n,
            cols: 1,
            data: vec![1.0; n],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1))
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Column means.
    pub fn column_means(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.cols];
        for r in self.iter_rows() {
            for (a, b) in m.iter_mut().zip(r) {
                *a += b;
            }
        }
        m.iter().map(|v| v / self.rows as f64).collect()
    }
}

/// Observed outcome/treatment pairs with covariates (leading intercept column).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub y: Vec<f64>,
    pub t: Vec<f64>,
    pub x: Design,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age_y: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age_t: Option<Vec<i64>>,
}

impl Dataset {
    pub fn new(y: Vec<f64>, t: Vec<f64>, x: Design) -> Result<Self> {
        let d = Self {
            y,
            t,
            x,
            age_y: None,
            age_t: None,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn with_ages(mut self, age_y: Option<Vec<i64>>, age_t: Option<Vec<i64>>) -> Result<Self> {
        self.age_y = age_y;
        self.age_t = age_t;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.y.len();
        if self.t.len() != n || self.x.rows() != n {
            return Err(Error::InvalidDataset(format!(
                "column lengths differ: y={}, t={}, x rows={}",
                n,
                self.t.len(),
                self.x.rows()
            )));
        }
        if n == 0 {
            return Err(Error::InvalidDataset("no observations".into()));
        }
        if n < self.x.cols() {
            return Err(Error::InvalidDataset(format!(
                "{} observations for {} covariates",
                n,
                self.x.cols()
            )));
        }
        if let Some(i) = (0..n).find(|&i| {
            !self.y[i].is_finite() || !self.t[i].is_finite() || self.x.row(i).iter().any(|v| !v.is_finite())
        }) {
            return Err(Error::InvalidDataset(format!("missing or non-finite value in row {i}")));
        }
        if self.x.cols() == 0 || self.x.iter_rows().any(|r| r[0] != 1.0) {
            return Err(Error::InvalidDataset("first covariate column must be an all-ones intercept".into()));
        }
        for ages in [&self.age_y, &self.age_t].into_iter().flatten() {
            if ages.len() != n {
                return Err(Error::InvalidDataset("age column length differs".into()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Rows `idx` (with repetition), as used by the bootstrap.
    pub fn resample(&self, idx: &[usize]) -> Self {
        let pick = |v: &Vec<f64>| idx.iter().map(|&i| v[i]).collect();
        let pick_age = |v: &Option<Vec<i64>>| v.as_ref().map(|a| idx.iter().map(|&i| a[i]).collect());
        Self {
            y: pick(&self.y),
            t: pick(&self.t),
            x: self.x.select(idx),
            age_y: pick_age(&self.age_y),
            age_t: pick_age(&self.age_t),
        }
    }
}
