//! Posterior-predictive conditional distributions and quantile curves.
//!
//! At a covariate row `x` each snapshot contributes the mixture a new,
//! hypothetical subject at `x` would face under the allocation prior:
//! weight `b_{x,C_h} m_h / (a + N_{C_h})` on cluster `h` and the remaining
//! mass on a fresh draw from the base measure. Averaging over snapshots gives
//! one pmf per `x`; every quantile at that `x` is read off the same cdf, so
//! curves for different levels cannot cross.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::compoisson::ComPoisson;
use crate::data::Dataset;
use crate::dpm::{Hyperparams, Kernel, PosteriorDraws, RegressionAtom};
use crate::error::{Error, Result};
use crate::exchange::BaseMeasure;

/// Mass allowed beyond `support_max`.
pub const SUPPORT_TAIL: f64 = 1e-6;
/// Per-component tail left unevaluated.
const COMPONENT_TAIL: f64 = 1e-10;
/// Components whose mode lies beyond this count are booked as tail mass.
pub const SUPPORT_CAP: u64 = 1_000_000;

/// Predictive pmf at one covariate row, truncated at `support_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalPmf {
    pub x: Vec<f64>,
    pub support_max: u64,
    pub probs: Vec<f64>,
    /// `1 - sum(probs)`: mass above `support_max` (plus rounding).
    pub tail_mass: f64,
}

impl ConditionalPmf {
    /// Builds a pmf from masses on `0..`, trimming once the cumulative mass
    /// reaches `1 - SUPPORT_TAIL / 2`.
    pub fn from_masses(x: Vec<f64>, mut probs: Vec<f64>) -> Self {
        if probs.is_empty() {
            probs.push(0.0);
        }
        let mut cum = 0.0;
        let mut end = probs.len();
        for (y, p) in probs.iter().enumerate() {
            cum += p;
            if cum >= 1.0 - SUPPORT_TAIL / 2.0 {
                end = y + 1;
                break;
            }
        }
        probs.truncate(end);
        let total: f64 = probs.iter().sum();
        Self { x, support_max: (probs.len() - 1) as u64, probs, tail_mass: (1.0 - total).max(0.0) }
    }

    pub fn pmf(&self, y: u64) -> f64 {
        self.probs.get(y as usize).copied().unwrap_or(0.0)
    }

    pub fn cdf(&self, y: u64) -> f64 {
        let end = (y as usize).min(self.probs.len() - 1);
        self.probs[..=end].iter().sum()
    }

    /// Smallest `y` with `F(y) >= p`; `support_max` when the truncated
    /// support does not reach `p`.
    pub fn quantile(&self, p: f64) -> u64 {
        let mut cum = 0.0;
        for (y, q) in self.probs.iter().enumerate() {
            cum += q;
            if cum >= p {
                return y as u64;
            }
        }
        self.support_max
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(y, p)| y as f64 * p).sum()
    }
}

/// Quantiles over a grid: `values[g][l]` is the quantile at level `p[l]`
/// and covariate row `x_grid[g]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTable {
    pub p: Vec<f64>,
    pub x_grid: Vec<Vec<f64>>,
    pub values: Vec<Vec<u64>>,
}

/// Predictive evaluator for one fitted chain.
pub struct Predictor<'a> {
    draws: &'a PosteriorDraws,
    hyper: &'a Hyperparams,
    kernel: Kernel,
    d: usize,
    n: usize,
}

impl<'a> Predictor<'a> {
    pub fn new(draws: &'a PosteriorDraws, data: &Dataset, hyper: &'a Hyperparams) -> Result<Self> {
        if draws.snapshots.is_empty() {
            return Err(Error::InvalidParameter("no posterior snapshots".into()));
        }
        if let Some(s) = draws.snapshots.iter().find(|s| s.labels.len() != data.n()) {
            return Err(Error::LengthMismatch { expected: data.n(), found: s.labels.len() });
        }
        Ok(Self { draws, hyper, kernel: Kernel::new(data, hyper.psi), d: data.d(), n: data.n() })
    }

    /// Mixture weights of the hypothetical subject at `x` for one snapshot:
    /// `(w_new, w_clusters)`.
    pub fn allocation_weights(&self, snapshot: usize, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_dim(x)?;
        let s = &self.draws.snapshots[snapshot];
        let log_k = self.kernel.log_k_to(x);
        let log_w: Vec<f64> = log_k.iter().zip(&s.gamma).map(|(k, g)| k + g.ln()).collect();
        let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = log_w.iter().map(|l| (l - max).exp()).sum();
        let b = |j: usize| (log_w[j] - max).exp() / total;
        let counts = s.basis_counts();
        let sizes = s.cluster_sizes();
        let a = self.hyper.a;
        let w: Vec<f64> =
            (0..s.k()).map(|h| b(s.basis[h]) * sizes[h] as f64 / (a + counts[s.basis[h]] as f64)).collect();
        let w0 = (1.0 - w.iter().sum::<f64>()).max(0.0);
        Ok((w0, w))
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::LengthMismatch { expected: self.d, found: x.len() });
        }
        Ok(())
    }

    fn new_atom(&self, snapshot: usize, x: &[f64]) -> RegressionAtom {
        let mut key = splitmix(self.hyper.seed ^ 0x0005_eed0_f9e0);
        key = splitmix(key ^ snapshot as u64);
        for v in x {
            key = splitmix(key ^ v.to_bits());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        self.hyper.base_measure().draw(self.d, &mut rng)
    }

    /// Predictive pmf at design row `x` (intercept included, same scale as
    /// the training rows).
    pub fn pmf(&self, x: &[f64]) -> Result<ConditionalPmf> {
        self.check_dim(x)?;
        let m = self.draws.snapshots.len() as f64;
        let mut probs: Vec<f64> = Vec::new();
        for (si, s) in self.draws.snapshots.iter().enumerate() {
            let (w0, w) = self.allocation_weights(si, x)?;
            for (h, wh) in w.iter().enumerate() {
                self.add_component(&mut probs, &s.atoms[h], x, wh / m)?;
            }
            if w0 > 0.0 {
                self.add_component(&mut probs, &self.new_atom(si, x), x, w0 / m)?;
            }
        }
        Ok(ConditionalPmf::from_masses(x.to_vec(), probs))
    }

    fn add_component(&self, probs: &mut Vec<f64>, atom: &RegressionAtom, x: &[f64], weight: f64) -> Result<()> {
        if weight < 1e-15 {
            return Ok(());
        }
        let params = atom.params_at(x, self.hyper.nu_min);
        if params.mode() > SUPPORT_CAP {
            return Ok(());
        }
        let dist = ComPoisson::new(params, &self.hyper.normalizer)?;
        for (y, p, _) in dist.walk(COMPONENT_TAIL) {
            if y > SUPPORT_CAP {
                break;
            }
            let y = y as usize;
            if y >= probs.len() {
                probs.resize(y + 1, 0.0);
            }
            probs[y] += weight * p;
        }
        Ok(())
    }

    pub fn quantile(&self, p: f64, x: &[f64]) -> Result<u64> {
        check_level(p)?;
        Ok(self.pmf(x)?.quantile(p))
    }

    pub fn quantile_curves(&self, p_list: &[f64], x_grid: &[Vec<f64>]) -> Result<QuantileTable> {
        for &p in p_list {
            check_level(p)?;
        }
        let values = x_grid
            .iter()
            .map(|x| {
                let pmf = self.pmf(x)?;
                Ok(p_list.iter().map(|&p| pmf.quantile(p)).collect())
            })
            .collect::<Result<_>>()?;
        Ok(QuantileTable { p: p_list.to_vec(), x_grid: x_grid.to_vec(), values })
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

fn check_level(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!("quantile level must lie in (0, 1), got {p}")));
    }
    Ok(())
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn conditional_pmf(
    x: &[f64],
    draws: &PosteriorDraws,
    data: &Dataset,
    hyper: &Hyperparams,
) -> Result<ConditionalPmf> {
    Predictor::new(draws, data, hyper)?.pmf(x)
}

pub fn conditional_quantile(
    p: f64,
    x: &[f64],
    draws: &PosteriorDraws,
    data: &Dataset,
    hyper: &Hyperparams,
) -> Result<u64> {
    Predictor::new(draws, data, hyper)?.quantile(p, x)
}

pub fn quantile_curves(
    p_list: &[f64],
    x_grid: &[Vec<f64>],
    draws: &PosteriorDraws,
    data: &Dataset,
    hyper: &Hyperparams,
) -> Result<QuantileTable> {
    Predictor::new(draws, data, hyper)?.quantile_curves(p_list, x_grid)
}
