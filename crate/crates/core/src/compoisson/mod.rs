//! The COM-Poisson distribution in its mean-centred parameterisation.
//!
//! With `mu > 0` and `nu > 0` the unnormalised mass is
//! `q(y) = (mu^y / y!)^nu` and `P(Y = y) = q(y) / Z(mu, nu)`. `floor(mu)` is
//! a mode, `nu = 1` is the Poisson distribution, `nu < 1` is overdispersed
//! and `nu > 1` underdispersed.
//!
//! All arithmetic is carried out on the log scale. The normalising constant
//! is a truncated series ([`log_normalizer`]); the samplers in [`sampler`]
//! only ever touch `q`, which is what the exchange algorithm requires.

mod normalizer;
pub mod sampler;

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};

pub use normalizer::{cdf, log_normalizer, log_pmf, moments_exact, normalizer_calls, quantile, ComPoisson};
pub use sampler::{sample, sample_with, Envelope};

/// Lower bound applied to the shape parameter wherever it is produced by a
/// regression link. The series for `Z` diverges at `nu = 0` when `mu >= 1`.
pub const DEFAULT_NU_MIN: f64 = 1e-3;

/// The `(mu, nu)` pair of one COM-Poisson distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComPoissonParams {
    mu: f64,
    nu: f64,
}

impl ComPoissonParams {
    pub fn new(mu: f64, nu: f64) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::InvalidParameter(format!("mu must be finite and > 0, got {mu}")));
        }
        if !(nu.is_finite() && nu > 0.0) {
            return Err(Error::InvalidParameter(format!("nu must be finite and > 0, got {nu}")));
        }
        Ok(Self { mu, nu })
    }

    /// For callers that have already clamped both parameters into range.
    pub(crate) fn from_parts_unchecked(mu: f64, nu: f64) -> Self {
        debug_assert!(mu > 0.0 && nu > 0.0);
        Self { mu, nu }
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// `lambda = mu^nu` of the original parameterisation.
    pub fn lambda(&self) -> f64 {
        self.mu.powf(self.nu)
    }

    /// `floor(mu)`; when `mu` is an integer, `mu - 1` is a mode as well.
    pub fn mode(&self) -> u64 {
        self.mu.floor() as u64
    }

    /// `log q(y) = nu * (y log mu - log y!)`.
    #[inline]
    pub fn log_unnormalized(&self, y: u64) -> f64 {
        self.nu * (y as f64 * self.mu.ln() - ln_factorial(y))
    }

    /// `log q(y) - log q(base)`, accurate when `y` is close to `base` even
    /// for very large `nu`.
    pub fn log_unnormalized_relative(&self, y: u64, base: u64) -> f64 {
        let (lo, hi, sign) = if y >= base { (base, y, 1.0) } else { (y, base, -1.0) };
        let magnitude = self.nu * (hi as f64 + 1.0) * (hi as f64 + 2.0).ln().max(self.mu.ln().abs());
        if magnitude < 1e6 {
            return self.log_unnormalized(y) - self.log_unnormalized(base);
        }
        let gap = hi - lo;
        let ln_fact_diff = if gap <= 64 {
            (lo + 1..=hi).map(|k| (k as f64).ln()).sum::<f64>()
        } else {
            ln_factorial(hi) - ln_factorial(lo)
        };
        sign * self.nu * (gap as f64 * self.mu.ln() - ln_fact_diff)
    }
}

/// Truncation settings for the normalising series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizerConfig {
    pub rel_tol: f64,
    pub max_terms: usize,
}

impl Default for NormalizerConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-12, max_terms: 1_000_000 }
    }
}

impl NormalizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::InvalidParameter(format!("rel_tol must lie in (0, 1), got {}", self.rel_tol)));
        }
        if self.max_terms == 0 {
            return Err(Error::InvalidParameter("max_terms must be at least 1".into()));
        }
        Ok(())
    }
}

/// Approximate moments `(mu, mu / nu)`.
///
/// This is only an approximation (it is poor for small `mu`); use
/// [`moments_exact`] when the actual mean and variance are needed.
pub fn moments_approx(params: ComPoissonParams) -> (f64, f64) {
    (params.mu, params.mu / params.nu)
}
