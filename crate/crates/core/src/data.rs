use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Affine map applied to each non-intercept covariate on ingestion:
/// `stored = (raw - mean) / sd`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardization {
    pub fn forward(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter().zip(self.means.iter().zip(&self.sds)).map(|(x, (m, s))| (x - m) / s).collect()
    }

    pub fn inverse(&self, stored: &[f64]) -> Vec<f64> {
        stored.iter().zip(self.means.iter().zip(&self.sds)).map(|(z, (m, s))| z * s + m).collect()
    }
}

/// Counts plus an `n x d` row-major design matrix whose first column is the
/// intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    y: Vec<u64>,
    x: Vec<f64>,
    d: usize,
    /// Names of the non-intercept covariates, in column order.
    pub covariate_names: Vec<String>,
    pub standardization: Option<Standardization>,
}

impl Dataset {
    /// Builds a dataset from counts and full design rows (intercept included).
    pub fn new(y: Vec<u64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = y.len();
        if n == 0 {
            return Err(Error::InvalidParameter("a dataset needs at least one observation".into()));
        }
        if rows.len() != n {
            return Err(Error::LengthMismatch { expected: n, found: rows.len() });
        }
        let d = rows[0].len();
        if d == 0 {
            return Err(Error::InvalidParameter("design rows must have at least one column".into()));
        }
        let mut x = Vec::with_capacity(n * d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::LengthMismatch { expected: d, found: row.len() });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parse { row: i + 1, message: "non-finite covariate".into() });
            }
            x.extend_from_slice(row);
        }
        let covariate_names = (1..d).map(|j| format!("x{j}")).collect();
        Ok(Self { y, x, d, covariate_names, standardization: None })
    }

    /// Intercept plus the given covariate columns.
    pub fn with_intercept(y: Vec<u64>, covariates: &[Vec<f64>]) -> Result<Self> {
        let rows = covariates
            .iter()
            .map(|c| std::iter::once(1.0).chain(c.iter().copied()).collect())
            .collect();
        Self::new(y, rows)
    }

    /// Intercept-only design.
    pub fn intercept_only(y: Vec<u64>) -> Result<Self> {
        let n = y.len();
        Self::new(y, vec![vec![1.0]; n])
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn y(&self) -> &[u64] {
        &self.y
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.x.chunks_exact(self.d)
    }

    /// Non-intercept covariates of row `i`.
    pub fn covariates(&self, i: usize) -> &[f64] {
        &self.row(i)[1..]
    }
}
