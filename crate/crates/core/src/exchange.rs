//! Exchange-algorithm Metropolis-Hastings for COM-Poisson regression atoms.
//!
//! For a proposal `theta*` and auxiliary data `y*` drawn from the model at
//! `theta*`, the acceptance ratio
//!
//! ```text
//! q_theta(y*) pi(theta*) q_theta*(y)
//! ----------------------------------
//! q_theta(y)  pi(theta)  q_theta*(y*)
//! ```
//!
//! contains unnormalised masses only. The random-walk proposal is symmetric
//! so it does not appear. Every member observation of a cluster gets its own
//! auxiliary count, drawn at that member's covariates.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::compoisson::{self, ComPoissonParams};
use crate::dpm::RegressionAtom;
use crate::error::{Error, Result};

/// Prior on regression atoms (the base measure of the mixture).
pub trait BaseMeasure {
    fn log_density(&self, atom: &RegressionAtom) -> f64;
    fn draw(&self, d: usize, rng: &mut dyn RngCore) -> RegressionAtom;
}

/// Random-walk scales for the two coefficient blocks plus the prior.
#[derive(Debug, Clone, Copy)]
pub struct ExchangeProposalConfig<'a, P: BaseMeasure + ?Sized> {
    /// Standard deviation of the spherical proposal on `b` (log-mean link).
    pub step_mu: f64,
    /// Standard deviation of the spherical proposal on `c` (log-shape link).
    pub step_nu: f64,
    pub nu_min: f64,
    pub prior: &'a P,
}

/// One observation of a cluster: covariate row and count.
#[derive(Debug, Clone, Copy)]
pub struct Member<'a> {
    pub x: &'a [f64],
    pub y: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomUpdate {
    pub atom: RegressionAtom,
    pub accepted_b: bool,
    pub accepted_c: bool,
}

#[inline]
pub(crate) fn exchange_term(y: u64, cur: ComPoissonParams, prop: ComPoissonParams, y_aux: u64) -> f64 {
    cur.log_unnormalized(y_aux) + prop.log_unnormalized(y) - cur.log_unnormalized(y) - prop.log_unnormalized(y_aux)
}

/// Log of the exchange acceptance ratio without the prior terms.
///
/// `y_aux[i]` must have been drawn from the model at `theta_prop[i]`.
pub fn exchange_log_ratio(
    y: &[u64],
    theta_cur: &[ComPoissonParams],
    theta_prop: &[ComPoissonParams],
    y_aux: &[u64],
) -> Result<f64> {
    let n = y.len();
    for len in [theta_cur.len(), theta_prop.len(), y_aux.len()] {
        if len != n {
            return Err(Error::LengthMismatch { expected: n, found: len });
        }
    }
    if n == 0 {
        return Err(Error::InvalidParameter("exchange ratio needs at least one observation".into()));
    }
    Ok((0..n).map(|i| exchange_term(y[i], theta_cur[i], theta_prop[i], y_aux[i])).sum())
}

/// One sweep over the atom: a block proposal for `b`, then one for `c`.
pub fn exchange_update_atom<R, P>(
    atom: &RegressionAtom,
    members: &[Member<'_>],
    cfg: &ExchangeProposalConfig<'_, P>,
    rng: &mut R,
) -> Result<AtomUpdate>
where
    R: Rng + ?Sized,
    P: BaseMeasure + ?Sized,
{
    if members.is_empty() {
        return Err(Error::InvalidParameter("cannot update an atom without members".into()));
    }
    let d = atom.dim();
    if let Some(m) = members.iter().find(|m| m.x.len() != d) {
        return Err(Error::LengthMismatch { expected: d, found: m.x.len() });
    }

    let mut current = atom.clone();

    let mut proposal = current.clone();
    for v in proposal.b.iter_mut() {
        *v += cfg.step_mu * rng.sample::<f64, _>(StandardNormal);
    }
    let accepted_b = accept(&current, &proposal, members, cfg, rng)?;
    if accepted_b {
        current = proposal;
    }

    let mut proposal = current.clone();
    for v in proposal.c.iter_mut() {
        *v += cfg.step_nu * rng.sample::<f64, _>(StandardNormal);
    }
    let accepted_c = accept(&current, &proposal, members, cfg, rng)?;
    if accepted_c {
        current = proposal;
    }

    Ok(AtomUpdate { atom: current, accepted_b, accepted_c })
}

fn accept<R, P>(
    current: &RegressionAtom,
    proposal: &RegressionAtom,
    members: &[Member<'_>],
    cfg: &ExchangeProposalConfig<'_, P>,
    rng: &mut R,
) -> Result<bool>
where
    R: Rng + ?Sized,
    P: BaseMeasure + ?Sized,
{
    if proposal == current {
        return Ok(true);
    }
    let mut log_alpha = cfg.prior.log_density(proposal) - cfg.prior.log_density(current);
    if log_alpha == f64::NEG_INFINITY {
        return Ok(false);
    }
    for m in members {
        let cur = current.params_at(m.x, cfg.nu_min);
        let prop = proposal.params_at(m.x, cfg.nu_min);
        let y_aux = compoisson::sample(prop, rng)?;
        log_alpha += exchange_term(m.y, cur, prop, y_aux);
    }
    Ok(log_alpha >= 0.0 || rng.random::<f64>().ln() < log_alpha)
}

/// Robbins-Monro tuning of the two proposal scales toward a target
/// acceptance rate. Confined to one chain; frozen after burn-in.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveSteps {
    log_step_mu: f64,
    log_step_nu: f64,
    rounds: u64,
    frozen: bool,
    pub target: f64,
}

impl AdaptiveSteps {
    pub fn new(step_mu: f64, step_nu: f64) -> Self {
        Self { log_step_mu: step_mu.ln(), log_step_nu: step_nu.ln(), rounds: 0, frozen: false, target: 0.25 }
    }

    pub fn step_mu(&self) -> f64 {
        self.log_step_mu.exp()
    }

    pub fn step_nu(&self) -> f64 {
        self.log_step_nu.exp()
    }

    /// Feeds one round of observed acceptance rates (each in `[0, 1]`).
    pub fn record(&mut self, rate_mu: Option<f64>, rate_nu: Option<f64>) {
        if self.frozen {
            return;
        }
        self.rounds += 1;
        let gain = 1.0 / (self.rounds as f64).powf(0.6);
        if let Some(r) = rate_mu {
            self.log_step_mu = (self.log_step_mu + gain * (r - self.target)).clamp(-12.0, 2.0);
        }
        if let Some(r) = rate_nu {
            self.log_step_nu = (self.log_step_nu + gain * (r - self.target)).clamp(-12.0, 2.0);
        }
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compoisson::normalizer_calls;
    use crate::dpm::NormalBaseMeasure;
    use approx::assert_abs_diff_eq;

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::Distribution;

    struct Flat;

    impl BaseMeasure for Flat {
        fn log_density(&self, _: &RegressionAtom) -> f64 {
            0.0
        }
        fn draw(&self, d: usize, _: &mut dyn RngCore) -> RegressionAtom {
            RegressionAtom::new(vec![0.0; d], vec![0.0; d])
        }
    }

    fn params(mu: f64, nu: f64) -> ComPoissonParams {
        ComPoissonParams::new(mu, nu).unwrap()
    }

    #[test]
    fn identical_proposal_gives_zero() {
        let theta = vec![params(2.0, 1.3), params(0.4, 0.7)];
        let r = exchange_log_ratio(&[3, 0], &theta, &theta, &[5, 2]).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn matching_auxiliary_data_cancels() {
        let r = exchange_log_ratio(&[2], &[params(1.7, 0.6)], &[params(9.0, 3.0)], &[2]).unwrap();
        assert_abs_diff_eq!(r, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn hand_evaluated_ratio() {
        // 3 log 2 - 0: q_theta*(3) / q_theta(3) = (4/2)^3
        let r = exchange_log_ratio(&[3], &[params(2.0, 1.0)], &[params(4.0, 1.0)], &[0]).unwrap();
        assert_abs_diff_eq!(r, 3.0 * 2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(r, 2.0794, epsilon = 1e-4);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let t = vec![params(1.0, 1.0)];
        assert!(matches!(
            exchange_log_ratio(&[1, 2], &t, &t, &[1, 2]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn zero_step_keeps_atom_and_never_touches_normalizer() {
        let prior = Flat;
        let cfg = ExchangeProposalConfig { step_mu: 0.0, step_nu: 0.0, nu_min: 1e-3, prior: &prior };
        let atom = RegressionAtom::new(vec![0.3], vec![-0.2]);
        let x = [1.0];
        let members = [Member { x: &x, y: 4 }];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let before = normalizer_calls();
        for _ in 0..100 {
            let up = exchange_update_atom(&atom, &members, &cfg, &mut rng).unwrap();
            assert_eq!(up.atom, atom);
        }
        assert_eq!(normalizer_calls(), before);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let prior = NormalBaseMeasure::new(2.0, 2.0);
        let cfg = ExchangeProposalConfig { step_mu: 0.1, step_nu: 0.1, nu_min: 1e-3, prior: &prior };
        let atom = RegressionAtom::new(vec![0.0, 0.0], vec![0.0, 0.0]);
        let x = [1.0];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(exchange_update_atom(&atom, &[Member { x: &x, y: 1 }], &cfg, &mut rng).is_err());
        assert!(exchange_update_atom(&atom, &[], &cfg, &mut rng).is_err());
    }

    #[test]
    fn underdispersed_data_pushes_shape_above_one() {
        // Binomial(10, 0.5) has variance 2.5 < mean 5
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let binom = rand_distr::Binomial::new(10, 0.5).unwrap();
        let ys: Vec<u64> = (0..100).map(|_| binom.sample(&mut rng)).collect();
        let x = [1.0];
        let members: Vec<Member> = ys.iter().map(|&y| Member { x: &x, y }).collect();
        let prior = NormalBaseMeasure::new(2.0, 2.0);
        let cfg = ExchangeProposalConfig { step_mu: 0.05, step_nu: 0.2, nu_min: 1e-3, prior: &prior };
        let mut atom = RegressionAtom::new(vec![1.0], vec![0.0]);
        let mut c_draws = Vec::new();
        for it in 0..6000 {
            atom = exchange_update_atom(&atom, &members, &cfg, &mut rng).unwrap().atom;
            if it >= 1000 {
                c_draws.push(atom.c[0]);
            }
        }
        let above = c_draws.iter().filter(|&&c| c > 0.0).count() as f64 / c_draws.len() as f64;
        assert!(above > 0.95, "P(nu > 1) = {above}");
    }

    #[test]
    fn adaptation_moves_toward_target_then_freezes() {
        let mut steps = AdaptiveSteps::new(0.1, 0.1);
        for _ in 0..50 {
            steps.record(Some(0.9), Some(0.0));
        }
        assert!(steps.step_mu() > 0.1);
        assert!(steps.step_nu() < 0.1);
        steps.freeze();
        let frozen = steps.clone();
        steps.record(Some(1.0), Some(1.0));
        assert_eq!(steps, frozen);
    }
}
