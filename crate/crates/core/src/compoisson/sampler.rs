//! Exact rejection samplers for the COM-Poisson distribution.
//!
//! Both envelopes are built from the unnormalised mass `q(y)` alone, so a
//! draw never evaluates the normalising constant.
//!
//! * [`Envelope::LogConcave`] uses that `log q` is concave in `y`: the
//!   constant `q(mode)` and the secant lines of `log q` through two pairs of
//!   neighbouring points (placed where `log q` has dropped by one unit on
//!   each side of the mode) all dominate `log q`. Their pointwise minimum is
//!   a flat body with two geometric tails; acceptance stays bounded away
//!   from zero for every `(mu, nu)`.
//! * [`Envelope::Poisson`] proposes from `Poisson(mu)` and accepts with
//!   probability `(p(y) / p(mode))^(nu - 1)`, `p` the Poisson term. Valid for
//!   `nu >= 1` only; efficiency falls like `1 / sqrt(nu)`.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use super::ComPoissonParams;
use crate::error::{Error, Result};

const MAX_ATTEMPTS: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Envelope {
    LogConcave,
    Poisson,
}

/// One exact draw from COM-Poisson(mu, nu).
pub fn sample<R: Rng + ?Sized>(params: ComPoissonParams, rng: &mut R) -> Result<u64> {
    sample_with(params, Envelope::LogConcave, rng)
}

pub fn sample_with<R: Rng + ?Sized>(params: ComPoissonParams, envelope: Envelope, rng: &mut R) -> Result<u64> {
    match envelope {
        Envelope::LogConcave => LogConcaveEnvelope::new(params).sample(rng),
        Envelope::Poisson => sample_poisson_envelope(params, rng),
    }
}

fn sample_poisson_envelope<R: Rng + ?Sized>(params: ComPoissonParams, rng: &mut R) -> Result<u64> {
    if params.nu() < 1.0 {
        return Err(Error::InvalidParameter(format!(
            "the Poisson envelope needs nu >= 1, got {}",
            params.nu()
        )));
    }
    let proposal = Poisson::new(params.mu())
        .map_err(|e| Error::InvalidParameter(format!("Poisson envelope for mu={}: {e}", params.mu())))?;
    let unit = ComPoissonParams { mu: params.mu(), nu: 1.0 };
    let mode = params.mode();
    let excess = params.nu() - 1.0;
    for _ in 0..MAX_ATTEMPTS {
        let y = proposal.sample(rng) as u64;
        let log_accept = excess * unit.log_unnormalized_relative(y, mode);
        if log_accept >= 0.0 || rng.random::<f64>().ln() < log_accept {
            return Ok(y);
        }
    }
    Err(Error::SamplerStalled { mu: params.mu(), nu: params.nu(), attempts: MAX_ATTEMPTS })
}

/// Flat body `[lo, hi)` at height `q(mode)`, a geometric left tail on
/// `[0, lo)` and a geometric right tail on `[hi, inf)`; all heights are
/// relative to `log q(mode)`.
#[derive(Debug, Clone)]
struct LogConcaveEnvelope {
    params: ComPoissonParams,
    mode: u64,
    lo: u64,
    hi: u64,
    // left line: log g(y) = left_at + (y - (lo - 1)) * left_slope, y < lo
    left_at: f64,
    left_slope: f64,
    // right line: log g(y) = right_at + (y - hi) * right_slope, y >= hi
    right_at: f64,
    right_slope: f64,
    mass_left: f64,
    mass_body: f64,
    mass_right: f64,
}

impl LogConcaveEnvelope {
    fn new(params: ComPoissonParams) -> Self {
        let m = params.mode();
        let f = |y: u64| params.log_unnormalized_relative(y, m);

        // right tangent pair: smallest y > m with f(y) <= -1
        let mut step = 1u64;
        while f(m + step) > -1.0 {
            step = step.saturating_mul(2);
        }
        let (mut a, mut b) = (m + step / 2, m + step);
        while b - a > 1 {
            let mid = a + (b - a) / 2;
            if f(mid) > -1.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        let yr = b;
        let fr = f(yr);
        let right_slope = f(yr + 1) - fr;
        // first y where the right line drops to the body height
        let cross = yr as f64 - fr.abs() / right_slope.abs();
        let hi = (cross.ceil().max((m + 1) as f64)) as u64;
        let right_at = fr + (hi as f64 - yr as f64) * right_slope;

        // left tangent pair: largest y < m with f(y) <= -1, if any
        let (lo, left_at, left_slope) = if m == 0 || f(0) > -1.0 {
            (0, 0.0, 0.0)
        } else {
            let (mut a, mut b) = (0u64, m);
            while b - a > 1 {
                let mid = a + (b - a) / 2;
                if f(mid) <= -1.0 {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            let yl = a;
            let fl = f(yl);
            let slope = f(yl + 1) - fl;
            let cross = yl as f64 + fl.abs() / slope;
            let last = (cross.floor() as u64).min(m);
            let at = fl + (last as f64 - yl as f64) * slope;
            (last + 1, at, slope)
        };

        let mass_left = if lo == 0 {
            0.0
        } else {
            // sum_{k=0}^{lo-1} exp(left_at - k * left_slope)
            left_at.exp() * (-(-left_slope * lo as f64).exp_m1()) / (-(-left_slope).exp_m1())
        };
        let mass_body = (hi - lo) as f64;
        let mass_right = right_at.exp() / (-right_slope.exp_m1());

        Self {
            params,
            mode: m,
            lo,
            hi,
            left_at,
            left_slope,
            right_at,
            right_slope,
            mass_left,
            mass_body,
            mass_right,
        }
    }

    fn log_envelope(&self, y: u64) -> f64 {
        if y < self.lo {
            self.left_at - (self.lo - 1 - y) as f64 * self.left_slope
        } else if y < self.hi {
            0.0
        } else {
            self.right_at + (y - self.hi) as f64 * self.right_slope
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<u64> {
        let total = self.mass_left + self.mass_body + self.mass_right;
        for _ in 0..MAX_ATTEMPTS {
            let u = rng.random::<f64>() * total;
            let y = if u < self.mass_left {
                // truncated geometric counted down from lo - 1
                let v: f64 = rng.random();
                let trunc = -(-self.left_slope * self.lo as f64).exp_m1();
                let k = ((-v * trunc).ln_1p() / -self.left_slope).floor();
                let k = (k.max(0.0) as u64).min(self.lo - 1);
                self.lo - 1 - k
            } else if u < self.mass_left + self.mass_body {
                self.lo + rng.random_range(0..self.hi - self.lo)
            } else {
                let v: f64 = 1.0 - rng.random::<f64>();
                let k = (v.ln() / self.right_slope).floor();
                if !(k < 1e18) {
                    continue;
                }
                self.hi + k as u64
            };
            let log_accept = self.params.log_unnormalized_relative(y, self.mode) - self.log_envelope(y);
            if log_accept >= 0.0 || rng.random::<f64>().ln() < log_accept {
                return Ok(y);
            }
        }
        Err(Error::SamplerStalled { mu: self.params.mu(), nu: self.params.nu(), attempts: MAX_ATTEMPTS })
    }
}
