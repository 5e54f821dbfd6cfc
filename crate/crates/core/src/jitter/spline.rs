use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cubic B-spline basis on `[lo, hi]` with the given interior knots. The
/// functions sum to one, so the basis already contains the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubicBSpline {
    /// Full knot vector: `lo` four times, the interior knots, `hi` four times.
    pub knots: Vec<f64>,
}

impl CubicBSpline {
    pub fn new(lo: f64, hi: f64, interior: &[f64]) -> Result<Self> {
        if !(lo < hi) || interior.iter().any(|&k| !(k > lo && k < hi)) || interior.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidParameter(format!(
                "spline knots must be increasing inside ({lo}, {hi}), got {interior:?}"
            )));
        }
        let mut knots = vec![lo; 4];
        knots.extend_from_slice(interior);
        knots.extend_from_slice(&[hi; 4]);
        Ok(Self { knots })
    }

    /// Interior knots at the 0.25, 0.5 and 0.75 sample quantiles of `x`,
    /// boundary knots at its range.
    pub fn from_quartiles(x: &[f64]) -> Result<Self> {
        let mut sorted = x.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (lo, hi) = match (sorted.first(), sorted.last()) {
            (Some(&lo), Some(&hi)) => (lo, hi),
            _ => return Err(Error::InvalidParameter("no covariate values for spline knots".into())),
        };
        let interior: Vec<f64> = [0.25, 0.5, 0.75].iter().map(|&q| quantile_sorted(&sorted, q)).collect();
        Self::new(lo, hi, &interior)
    }

    pub fn len(&self) -> usize {
        self.knots.len() - 4
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Basis values at `x`; `x` outside the boundary knots is clamped.
    pub fn eval(&self, x: f64) -> Vec<f64> {
        let t = &self.knots;
        let (lo, hi) = (t[0], t[t.len() - 1]);
        let x = x.clamp(lo, hi);
        let m = self.len();
        // span index s with t[s] <= x < t[s+1], using the last non-empty span at hi
        let mut s = 3;
        while s + 1 < m && t[s + 1] <= x {
            s += 1;
        }
        // de Boor triangle for the four non-zero functions B_{s-3..=s}
        let mut n = [0.0; 4];
        n[0] = 1.0;
        let mut left = [0.0; 4];
        let mut right = [0.0; 4];
        for j in 1..=3 {
            left[j] = x - t[s + 1 - j];
            right[j] = t[s + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom == 0.0 { 0.0 } else { n[r] / denom };
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        let mut out = vec![0.0; m];
        for (r, v) in n.iter().enumerate() {
            out[s - 3 + r] = *v;
        }
        out
    }
}

/// Linear-interpolation sample quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
