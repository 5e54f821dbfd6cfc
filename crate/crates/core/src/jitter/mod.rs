//! Jittered quantile regression for counts.
//!
//! Counts are made continuous by `Z = Y + U`, `U ~ Uniform[0, 1)`, the
//! quantile of the monotone transform `T(Z; p) = log(Z - p)` is fitted by
//! linear quantile regression, and the count quantile is recovered as
//! `ceil(p + exp(x'b) - 1)`. Coefficients are averaged over `m_jitter`
//! independent jitters.
//!
//! Each level `p` is fitted separately, so nothing prevents the resulting
//! curves from crossing; [`detect_crossing`] reports where they do.

mod simplex;
mod spline;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use simplex::{check_loss, fit_quantile_regression, objective, CheckLossFit};
pub use spline::CubicBSpline;

/// Default lower-branch constant of the transform.
pub const DEFAULT_VARSIGMA: f64 = 1e-5;

/// `z_i = y_i + u_i`.
pub fn jitter<R: Rng + ?Sized>(y: &[u64], rng: &mut R) -> Vec<f64> {
    y.iter().map(|&v| v as f64 + rng.random::<f64>()).collect()
}

/// `log(z - p)` for `z > p`, `log(varsigma)` otherwise.
pub fn transform(z: f64, p: f64, varsigma: f64) -> f64 {
    if z > p {
        (z - p).ln()
    } else {
        varsigma.ln()
    }
}

/// Covariate expansion used by a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Basis {
    /// Intercept followed by the raw covariates.
    Linear,
    /// Cubic B-splines of a single covariate.
    Spline(CubicBSpline),
}

impl Basis {
    pub fn expand(&self, covariates: &[f64]) -> Vec<f64> {
        match self {
            Basis::Linear => std::iter::once(1.0).chain(covariates.iter().copied()).collect(),
            Basis::Spline(s) => s.eval(covariates[0]),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Basis::Linear => "linear",
            Basis::Spline(_) => "spline",
        }
    }
}

/// Which basis to build from the training covariates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    Linear,
    /// Knots at the covariate's range and quartiles; one covariate only.
    Spline,
}

impl BasisKind {
    pub fn build(self, covariates: &[Vec<f64>]) -> Result<Basis> {
        match self {
            BasisKind::Linear => Ok(Basis::Linear),
            BasisKind::Spline => {
                if covariates.first().map(Vec::len) != Some(1) {
                    return Err(Error::InvalidParameter("the spline basis needs exactly one covariate".into()));
                }
                let x: Vec<f64> = covariates.iter().map(|c| c[0]).collect();
                Ok(Basis::Spline(CubicBSpline::from_quartiles(&x)?))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JitterConfig {
    pub m_jitter: usize,
    pub varsigma: f64,
}

impl Default for JitterConfig {
    fn default() -> Self {
        Self { m_jitter: 100, varsigma: DEFAULT_VARSIGMA }
    }
}

/// Averaged coefficients of the transformed-quantile regression at level `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileFit {
    pub p: f64,
    pub beta: Vec<f64>,
    pub basis: Basis,
    pub m_jitter: usize,
}

/// Fits level `p` on counts `y` and covariate rows (no intercept column).
pub fn fit_jittered<R: Rng + ?Sized>(
    y: &[u64],
    covariates: &[Vec<f64>],
    p: f64,
    kind: BasisKind,
    cfg: &JitterConfig,
    rng: &mut R,
) -> Result<QuantileFit> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!("quantile level must lie in (0, 1), got {p}")));
    }
    if cfg.m_jitter == 0 {
        return Err(Error::InvalidParameter("m_jitter must be at least 1".into()));
    }
    if !(cfg.varsigma > 0.0) {
        return Err(Error::InvalidParameter("varsigma must be > 0".into()));
    }
    if covariates.len() != y.len() {
        return Err(Error::LengthMismatch { expected: y.len(), found: covariates.len() });
    }
    let basis = kind.build(covariates)?;
    let rows: Vec<Vec<f64>> = covariates.iter().map(|c| basis.expand(c)).collect();
    let d = rows.first().map_or(0, Vec::len);
    let x: Vec<f64> = rows.concat();
    let mut beta = vec![0.0; d];
    let mut warm: Option<Vec<usize>> = None;
    for _ in 0..cfg.m_jitter {
        let t: Vec<f64> = jitter(y, rng).into_iter().map(|z| transform(z, p, cfg.varsigma)).collect();
        let fit = fit_quantile_regression(&t, &x, d, p, warm.as_deref())?;
        beta.iter_mut().zip(&fit.beta).for_each(|(a, b)| *a += b / cfg.m_jitter as f64);
        warm = Some(fit.basis);
    }
    Ok(QuantileFit { p, beta, basis, m_jitter: cfg.m_jitter })
}

/// `max(0, ceil(Q_Z - 1))` with `Q_Z = p + exp(x'b)`.
pub fn estimate_count_quantile(covariates: &[f64], fit: &QuantileFit) -> u64 {
    let row = fit.basis.expand(covariates);
    let eta: f64 = row.iter().zip(&fit.beta).map(|(a, b)| a * b).sum();
    count_from_continuous(fit.p + eta.exp())
}

/// `max(0, ceil(q_z - 1))`.
pub fn count_from_continuous(q_z: f64) -> u64 {
    let v = (q_z - 1.0).ceil();
    if v <= 0.0 || v.is_nan() {
        0
    } else if v >= u64::MAX as f64 {
        u64::MAX
    } else {
        v as u64
    }
}

/// One violation of monotonicity in `p` at a grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub x: Vec<f64>,
    pub p_low: f64,
    pub p_high: f64,
}

/// Every `(x, p1, p2)` with `p1 < p2` and `Q(p1 | x) > Q(p2 | x)`.
pub fn detect_crossing(fits: &[QuantileFit], x_grid: &[Vec<f64>]) -> Vec<Crossing> {
    let p: Vec<f64> = fits.iter().map(|f| f.p).collect();
    let values: Vec<Vec<u64>> =
        x_grid.iter().map(|x| fits.iter().map(|f| estimate_count_quantile(x, f)).collect()).collect();
    find_crossings(&p, x_grid, &values)
}

/// Crossings in a table `values[g][l]` of quantiles at level `p[l]`.
pub fn find_crossings(p: &[f64], x_grid: &[Vec<f64>], values: &[Vec<u64>]) -> Vec<Crossing> {
    let mut out = Vec::new();
    for (x, row) in x_grid.iter().zip(values) {
        for a in 0..p.len() {
            for b in 0..p.len() {
                if p[a] < p[b] && row[a] > row[b] {
                    out.push(Crossing { x: x.clone(), p_low: p[a], p_high: p[b] });
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn transform_branches() {
        assert_abs_diff_eq!(transform(2.5, 0.5, 1e-5), 2f64.ln(), epsilon = 1e-15);
        assert_eq!(transform(0.3, 0.5, 1e-5), 1e-5f64.ln());
        assert_eq!(transform(1.7, 0.7, 1e-5), 0.0);
    }

    #[test]
    fn retransform_boundaries() {
        assert_eq!(count_from_continuous(3.2), 3);
        assert_eq!(count_from_continuous(1.0), 0);
        assert_eq!(count_from_continuous(0.2), 0);
    }

    #[test]
    fn jitter_keeps_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = [0, 3, 7, 0, 12];
        for _ in 0..100 {
            let z = jitter(&y, &mut rng);
            assert!(z.iter().zip(&y).all(|(z, &y)| z.floor() as u64 == y));
        }
    }

    #[test]
    fn constant_counts_are_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let y = vec![4u64; 60];
        let cov: Vec<Vec<f64>> = (0..60).map(|i| vec![i as f64 / 60.0]).collect();
        for p in [0.1, 0.5, 0.9] {
            for kind in [BasisKind::Linear, BasisKind::Spline] {
                let fit = fit_jittered(&y, &cov, p, kind, &JitterConfig { m_jitter: 5, ..Default::default() }, &mut rng)
                    .unwrap();
                for x in [0.0, 0.3, 0.99] {
                    assert_eq!(estimate_count_quantile(&[x], &fit), 4, "p={p} {kind:?}");
                }
            }
        }
    }

    #[test]
    fn crossings_found_only_when_present() {
        let grid = vec![vec![0.0], vec![1.0]];
        let lo = QuantileFit { p: 0.2, beta: vec![0.0, 1.0], basis: Basis::Linear, m_jitter: 1 };
        let hi = QuantileFit { p: 0.8, beta: vec![1.0, 1.0], basis: Basis::Linear, m_jitter: 1 };
        assert!(detect_crossing(std::slice::from_ref(&lo), &grid).is_empty());
        assert!(detect_crossing(&[lo.clone(), hi.clone()], &grid).is_empty());
        let swapped = [QuantileFit { p: 0.2, ..hi }, QuantileFit { p: 0.8, ..lo }];
        assert_eq!(detect_crossing(&swapped, &grid).len(), 2);
    }
}
