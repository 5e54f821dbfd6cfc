use std::cell::Cell;

use super::{ComPoissonParams, NormalizerConfig};
use crate::error::{Error, Result};

thread_local! {
    static NORMALIZER_CALLS: Cell<u64> = const { Cell::new(0) };
}

/// Number of normalising-series evaluations performed on the current thread.
///
/// Used to check that code paths which must not depend on `Z` (the exchange
/// acceptance ratios) never evaluate it.
pub fn normalizer_calls() -> u64 {
    NORMALIZER_CALLS.with(|c| c.get())
}

/// Sums of the series terms relative to the term at the mode `m`:
/// `sum = sum_j w_j`, `first = sum_j (j - m) w_j`, `second = sum_j (j - m)^2 w_j`
/// with `w_j = q(j) / q(m)`.
struct SeriesSums {
    log_mode_term: f64,
    sum: f64,
    first: f64,
    second: f64,
}

// Terms are unimodal in j with the maximum at floor(mu), so we sum outward
// from the mode in both directions. In either direction the ratio of
// consecutive terms is below one and decreasing, so `w * r / (1 - r)` bounds
// the rest of the series on that side.
fn series_sums(params: ComPoissonParams, cfg: &NormalizerConfig, moments: bool) -> Result<SeriesSums> {
    cfg.validate()?;
    NORMALIZER_CALLS.with(|c| c.set(c.get() + 1));

    let nu = params.nu();
    let ln_mu = params.mu().ln();
    let m = params.mode();
    let tol = cfg.rel_tol;
    let weight = |k: f64| if moments { (1.0 + k) * (1.0 + k) } else { 1.0 };

    let mut sum = 1.0;
    let mut first = 0.0;
    let mut second = 0.0;
    let mut terms = 1usize;

    // upward: j = m+1, m+2, ...
    let mut log_w = 0.0;
    let mut j = m;
    loop {
        j += 1;
        log_w += nu * (ln_mu - (j as f64).ln());
        let w = log_w.exp();
        let k = (j - m) as f64;
        sum += w;
        first += k * w;
        second += k * k * w;
        terms += 1;

        let mut r = (nu * (ln_mu - ((j + 1) as f64).ln())).exp();
        if moments {
            r *= weight(k + 1.0) / weight(k);
        }
        let wk = w * weight(k);
        if r < 1.0 && wk < tol * sum && wk * r / (1.0 - r) < tol * sum {
            break;
        }
        if w == 0.0 {
            break;
        }
        if terms >= cfg.max_terms {
            return Err(Error::NormalizerNotConverged { mu: params.mu(), nu, max_terms: cfg.max_terms });
        }
    }

    // downward: j = m-1, ..., 0
    let mut log_w = 0.0;
    let mut j = m;
    while j > 0 {
        log_w -= nu * (ln_mu - (j as f64).ln());
        j -= 1;
        let w = log_w.exp();
        let k = (m - j) as f64;
        sum += w;
        first -= k * w;
        second += k * k * w;
        terms += 1;
        if j == 0 || w == 0.0 {
            break;
        }
        let mut r = (nu * ((j as f64).ln() - ln_mu)).exp();
        if moments {
            r *= weight(k + 1.0) / weight(k);
        }
        let wk = w * weight(k);
        if r < 1.0 && wk < tol * sum && wk * r / (1.0 - r) < tol * sum {
            break;
        }
        if terms >= cfg.max_terms {
            return Err(Error::NormalizerNotConverged { mu: params.mu(), nu, max_terms: cfg.max_terms });
        }
    }

    Ok(SeriesSums { log_mode_term: params.log_unnormalized(m), sum, first, second })
}

/// `log Z(mu, nu)` by truncated log-space summation of `(mu^j / j!)^nu`.
pub fn log_normalizer(params: ComPoissonParams, cfg: &NormalizerConfig) -> Result<f64> {
    let s = series_sums(params, cfg, false)?;
    Ok(s.log_mode_term + s.sum.ln())
}

pub fn log_pmf(y: u64, params: ComPoissonParams, cfg: &NormalizerConfig) -> Result<f64> {
    Ok(params.log_unnormalized(y) - log_normalizer(params, cfg)?)
}

/// Exact mean and variance by truncated summation.
pub fn moments_exact(params: ComPoissonParams, cfg: &NormalizerConfig) -> Result<(f64, f64)> {
    let s = series_sums(params, cfg, true)?;
    let shift = s.first / s.sum;
    let mean = params.mode() as f64 + shift;
    let var = (s.second / s.sum - shift * shift).max(0.0);
    Ok((mean, var))
}

pub fn cdf(y: u64, params: ComPoissonParams, cfg: &NormalizerConfig) -> Result<f64> {
    Ok(ComPoisson::new(params, cfg)?.cdf(y))
}

/// Smallest `y` with `cdf(y) >= p`.
pub fn quantile(p: f64, params: ComPoissonParams, cfg: &NormalizerConfig) -> Result<u64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!("quantile level must lie in (0, 1), got {p}")));
    }
    Ok(ComPoisson::new(params, cfg)?.quantile(p))
}

/// A COM-Poisson distribution with its normalising constant evaluated once.
#[derive(Debug, Clone, Copy)]
pub struct ComPoisson {
    params: ComPoissonParams,
    log_z: f64,
}

impl ComPoisson {
    pub fn new(params: ComPoissonParams, cfg: &NormalizerConfig) -> Result<Self> {
        Ok(Self { params, log_z: log_normalizer(params, cfg)? })
    }

    pub fn params(&self) -> ComPoissonParams {
        self.params
    }

    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    pub fn log_pmf(&self, y: u64) -> f64 {
        self.params.log_unnormalized(y) - self.log_z
    }

    pub fn pmf(&self, y: u64) -> f64 {
        self.log_pmf(y).exp()
    }

    /// Walks the pmf upward from zero, yielding `(y, pmf(y))` until the mass
    /// not yet visited is provably below `tail_tol`.
    pub fn walk(&self, tail_tol: f64) -> PmfWalk {
        PmfWalk {
            ln_mu: self.params.mu().ln(),
            nu: self.params.nu(),
            mode: self.params.mode(),
            next_y: 0,
            log_p: -self.log_z,
            cum: 0.0,
            tail_tol,
            done: false,
        }
    }

    pub fn cdf(&self, y: u64) -> f64 {
        let mut last = 0.0;
        for (j, _, cum) in self.walk(f64::EPSILON * 0.25) {
            last = cum;
            if j >= y {
                break;
            }
        }
        last.min(1.0)
    }

    pub fn quantile(&self, p: f64) -> u64 {
        let mut last = 0;
        for (j, _, cum) in self.walk(f64::EPSILON * 0.25) {
            last = j;
            if cum >= p {
                break;
            }
        }
        last
    }
}

/// Iterator over `(y, pmf(y), cdf(y))`; see [`ComPoisson::walk`].
#[derive(Debug, Clone)]
pub struct PmfWalk {
    ln_mu: f64,
    nu: f64,
    mode: u64,
    next_y: u64,
    log_p: f64,
    cum: f64,
    tail_tol: f64,
    done: bool,
}

impl Iterator for PmfWalk {
    type Item = (u64, f64, f64);

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let y = self.next_y;
        if y > 0 {
            self.log_p += self.nu * (self.ln_mu - (y as f64).ln());
        }
        let p = self.log_p.exp();
        self.cum += p;
        self.next_y += 1;
        if y >= self.mode {
            let r = (self.nu * (self.ln_mu - ((y + 1) as f64).ln())).exp();
            let rest = if r < 1.0 { p * r / (1.0 - r) } else { f64::INFINITY };
            if rest < self.tail_tol || self.cum >= 1.0 {
                self.done = true;
            }
        }
        Some((y, p, self.cum))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params(mu: f64, nu: f64) -> ComPoissonParams {
        ComPoissonParams::new(mu, nu).unwrap()
    }

    // brute-force: sum every term from 0 to `upper` in log space
    fn brute_log_z(mu: f64, nu: f64, upper: u64) -> f64 {
        let p = params(mu, nu);
        let terms: Vec<f64> = (0..=upper).map(|j| p.log_unnormalized(j)).collect();
        let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
    }

    #[test]
    fn poisson_special_cases() {
        let cfg = NormalizerConfig::default();
        assert_abs_diff_eq!(log_normalizer(params(1.0, 1.0), &cfg).unwrap(), 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(log_normalizer(params(5.0, 1.0), &cfg).unwrap(), 5.0, epsilon = 1e-13);
        assert_abs_diff_eq!(log_pmf(0, params(1.0, 1.0), &cfg).unwrap(), -1.0, epsilon = 1e-13);
        let p = log_pmf(2, params(3.0, 1.0), &cfg).unwrap().exp();
        assert_abs_diff_eq!(p, 9.0 * (-3.0f64).exp() / 2.0, epsilon = 1e-14);
    }

    #[test]
    fn overdispersed_normalizer_matches_long_series() {
        let cfg = NormalizerConfig::default();
        let got = log_normalizer(params(2.0, 0.5), &cfg).unwrap();
        let want = brute_log_z(2.0, 0.5, 400);
        assert!(((got - want) / want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn pmf_matches_explicit_normalisation() {
        let cfg = NormalizerConfig::default();
        let p = params(2.0, 2.0);
        let denom: f64 = (0..=200u64).map(|y| p.log_unnormalized(y).exp()).sum();
        let want = p.log_unnormalized(1).exp() / denom;
        assert_abs_diff_eq!(log_pmf(1, p, &cfg).unwrap().exp(), want, epsilon = 1e-14);
    }

    #[test]
    fn exact_moments() {
        let cfg = NormalizerConfig::default();
        let (m, v) = moments_exact(params(3.0, 1.0), &cfg).unwrap();
        assert_abs_diff_eq!(m, 3.0, epsilon = 1e-10);
        assert_abs_diff_eq!(v, 3.0, epsilon = 1e-9);
        let (m, v) = moments_exact(params(0.5, 1.0), &cfg).unwrap();
        assert_abs_diff_eq!(m, 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(v, 0.5, epsilon = 1e-10);

        let p = params(3.0, 2.0);
        let w: Vec<f64> = (0..=300u64).map(|y| p.log_unnormalized(y).exp()).collect();
        let z: f64 = w.iter().sum();
        let mean: f64 = w.iter().enumerate().map(|(y, w)| y as f64 * w).sum::<f64>() / z;
        let var: f64 = w.iter().enumerate().map(|(y, w)| (y as f64 - mean).powi(2) * w).sum::<f64>() / z;
        let (m, v) = moments_exact(p, &cfg).unwrap();
        assert_abs_diff_eq!(m, mean, epsilon = 1e-10);
        assert_abs_diff_eq!(v, var, epsilon = 1e-10);
    }

    #[test]
    fn approximate_moments() {
        assert_eq!(super::super::moments_approx(params(4.0, 1.0)), (4.0, 4.0));
        assert_eq!(super::super::moments_approx(params(4.0, 2.0)), (4.0, 2.0));
        assert_eq!(super::super::moments_approx(params(4.0, 0.5)), (4.0, 8.0));
    }

    #[test]
    fn quantiles() {
        let cfg = NormalizerConfig::default();
        assert_eq!(quantile(0.5, params(1.0, 1.0), &cfg).unwrap(), 1);
        assert_eq!(quantile(1e-300, params(7.3, 0.3), &cfg).unwrap(), 0);

        let p = params(2.0, 0.5);
        let w: Vec<f64> = (0..=500u64).map(|y| p.log_unnormalized(y).exp()).collect();
        let z: f64 = w.iter().sum();
        let mut cum = 0.0;
        let mut want = 0;
        for (y, w) in w.iter().enumerate() {
            cum += w / z;
            if cum >= 0.9 {
                want = y as u64;
                break;
            }
        }
        assert_eq!(quantile(0.9, p, &cfg).unwrap(), want);
        assert!(quantile(0.0, p, &cfg).is_err());
        assert!(quantile(1.0, p, &cfg).is_err());
    }

    #[test]
    fn non_convergence_is_reported() {
        let cfg = NormalizerConfig { rel_tol: 1e-12, max_terms: 5 };
        let err = log_normalizer(params(50.0, 0.2), &cfg).unwrap_err();
        assert!(matches!(err, Error::NormalizerNotConverged { .. }));
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(ComPoissonParams::new(0.0, 1.0).is_err());
        assert!(ComPoissonParams::new(1.0, 0.0).is_err());
        assert!(ComPoissonParams::new(f64::NAN, 1.0).is_err());
        assert!(NormalizerConfig { rel_tol: 1.5, max_terms: 10 }.validate().is_err());
    }

    #[test]
    fn calls_are_counted() {
        let before = normalizer_calls();
        log_normalizer(params(3.0, 1.5), &NormalizerConfig::default()).unwrap();
        assert_eq!(normalizer_calls(), before + 1);
    }
}
