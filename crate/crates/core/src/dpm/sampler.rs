use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use statrs::function::gamma::ln_gamma;

use super::kernel::{log_sum_exp, Kernel};
use super::{
    BasisUpdate, ChainDiagnostics, DpmState, Hyperparams, LocationWeights, NormalBaseMeasure, PosteriorDraws,
};
use crate::compoisson;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::exchange::{exchange_term, exchange_update_atom, AdaptiveSteps, BaseMeasure, ExchangeProposalConfig, Member};

/// Conditional-prior weights for one subject's allocation, computed with
/// the subject removed. `existing[h]` refers to cluster `h` of the current
/// state; the subject's own cluster gets weight 0 if it is a singleton.
/// `new + sum(existing) = 1` up to rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationWeights {
    pub new: f64,
    pub existing: Vec<f64>,
}

/// Acceptance counts of one sweep.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SweepStats {
    pub allocation_proposals: usize,
    pub allocation_accepted: usize,
    pub atom_acceptance_b: f64,
    pub atom_acceptance_c: f64,
}

/// Sampler bound to one dataset. Caches the covariate kernel and the
/// per-subject normalisers `log sum_l gamma_l K_il`, refreshed whenever the
/// state's `gamma` or `psi` changes.
pub struct DpmSampler<'a> {
    data: &'a Dataset,
    hyper: Hyperparams,
    prior: NormalBaseMeasure,
    kernel: Kernel,
    steps: AdaptiveSteps,
    gamma_seen: Vec<f64>,
    ln_gamma: Vec<f64>,
    log_d: Vec<f64>,
}

impl<'a> DpmSampler<'a> {
    pub fn new(data: &'a Dataset, hyper: &Hyperparams) -> Result<Self> {
        hyper.validate()?;
        Ok(Self {
            data,
            prior: hyper.base_measure(),
            kernel: Kernel::new(data, hyper.psi),
            steps: AdaptiveSteps::new(hyper.step_mu, hyper.step_nu),
            hyper: hyper.clone(),
            gamma_seen: Vec::new(),
            ln_gamma: Vec::new(),
            log_d: Vec::new(),
        })
    }

    pub fn steps(&self) -> &AdaptiveSteps {
        &self.steps
    }

    pub fn freeze_adaptation(&mut self) {
        self.steps.freeze();
    }

    /// One cluster holding every subject, its atom drawn from the base
    /// measure and moved by the warm-up exchange updates, its basis index
    /// drawn from the basis-index conditional.
    pub fn initial_state<R: RngCore>(&mut self, rng: &mut R) -> Result<DpmState> {
        let n = self.data.n();
        let mut atom = self.prior.draw(self.data.d(), rng);
        let members: Vec<Member> = (0..n).map(|i| Member { x: self.data.row(i), y: self.data.y()[i] }).collect();
        let scale = 1.0 / (n as f64).sqrt();
        for _ in 0..self.hyper.warmup_updates {
            let cfg = self.proposal_config(scale);
            let up = exchange_update_atom(&atom, &members, &cfg, rng)?;
            self.steps.record(Some(up.accepted_b as u8 as f64), Some(up.accepted_c as u8 as f64));
            atom = up.atom;
        }
        let mut state = DpmState::new(vec![0; n], vec![0], vec![atom], vec![1.0; n], self.hyper.a, self.hyper.psi)?;
        self.draw_basis_indices(&mut state, rng)?;
        Ok(state)
    }

    fn proposal_config(&self, scale: f64) -> ExchangeProposalConfig<'_, NormalBaseMeasure> {
        ExchangeProposalConfig {
            step_mu: self.steps.step_mu() * scale,
            step_nu: self.steps.step_nu() * scale,
            nu_min: self.hyper.nu_min,
            prior: &self.prior,
        }
    }

    fn sync(&mut self, state: &DpmState) -> Result<()> {
        let n = self.data.n();
        if state.n() != n {
            return Err(Error::InconsistentState(format!("state has {} subjects, data {n}", state.n())));
        }
        if state.psi != self.kernel.psi() {
            self.kernel = Kernel::new(self.data, state.psi);
            self.gamma_seen.clear();
        }
        if self.gamma_seen.as_slice() != state.gamma() {
            self.gamma_seen = state.gamma().to_vec();
            self.ln_gamma = self.gamma_seen.iter().map(|g| g.ln()).collect();
            self.log_d = (0..n)
                .map(|i| {
                    let row = self.kernel.log_k_row(i);
                    log_sum_exp(row.iter().zip(&self.ln_gamma).map(|(k, g)| k + g))
                })
                .collect();
            if self.log_d.iter().any(|v| !v.is_finite()) {
                return Err(Error::InconsistentState("a subject has zero total basis weight".into()));
            }
        }
        Ok(())
    }

    #[inline]
    fn log_b(&self, i: usize, j: usize) -> f64 {
        self.ln_gamma[j] + self.kernel.log_k(i, j) - self.log_d[i]
    }

    pub fn allocation_prior_weights(&mut self, state: &DpmState, i: usize) -> Result<AllocationWeights> {
        self.sync(state)?;
        Ok(self.prior_weights(state, i))
    }

    fn prior_weights(&self, state: &DpmState, i: usize) -> AllocationWeights {
        let own = state.labels()[i];
        let own_basis = state.basis()[own];
        let a = state.a;
        let mut existing = vec![0.0; state.k()];
        let mut used = 0.0;
        for (h, w) in existing.iter_mut().enumerate() {
            let m = state.cluster_sizes()[h] - usize::from(h == own);
            if m == 0 {
                continue;
            }
            let j = state.basis()[h];
            let big_n = state.basis_counts()[j] - usize::from(j == own_basis);
            *w = self.log_b(i, j).exp() * m as f64 / (a + big_n as f64);
            used += *w;
        }
        // sum_j b_ij a / (a + N_j) = 1 - sum_j b_ij N_j / (a + N_j)
        AllocationWeights { new: (1.0 - used).max(0.0), existing }
    }

    /// Step 1 for subject `i`. Returns whether the subject changed cluster.
    pub fn update_allocation<R: RngCore>(&mut self, state: &mut DpmState, i: usize, rng: &mut R) -> Result<bool> {
        Ok(self.allocation_move(state, i, rng)? == Some(true))
    }

    /// `None` when the proposal was the current cluster.
    fn allocation_move<R: RngCore>(&mut self, state: &mut DpmState, i: usize, rng: &mut R) -> Result<Option<bool>> {
        self.sync(state)?;
        let w = self.prior_weights(state, i);
        let total = w.new + w.existing.iter().sum::<f64>();
        let mut u = rng.random::<f64>() * total;
        let mut dest = None;
        for (h, &wh) in w.existing.iter().enumerate() {
            if u < wh {
                dest = Some(h);
                break;
            }
            u -= wh;
        }
        let own = state.labels()[i];
        if dest == Some(own) {
            return Ok(None);
        }
        let x = self.data.row(i);
        let y = self.data.y()[i];
        let nu_min = self.hyper.nu_min;
        let theta = state.atoms()[own].params_at(x, nu_min);
        match dest {
            Some(h) => {
                let theta_star = state.atoms()[h].params_at(x, nu_min);
                let accept = theta_star == theta || {
                    let y_aux = compoisson::sample(theta_star, rng)?;
                    accept_log(exchange_term(y, theta, theta_star, y_aux), rng)
                };
                if accept {
                    state.move_to(i, h);
                }
                Ok(Some(accept))
            }
            None => {
                let atom = self.prior.draw(self.data.d(), rng);
                let theta_star = atom.params_at(x, nu_min);
                let y_aux = compoisson::sample(theta_star, rng)?;
                let accept = accept_log(exchange_term(y, theta, theta_star, y_aux), rng);
                if accept {
                    let own_basis = state.basis()[own];
                    let log_b: Vec<f64> = (0..self.data.n())
                        .map(|j| {
                            let lb = self.log_b(i, j);
                            match self.hyper.basis_update {
                                BasisUpdate::KernelOnly => lb,
                                BasisUpdate::WithUrnFactor => {
                                    let big_n = state.basis_counts()[j] - usize::from(j == own_basis);
                                    lb + (state.a / (state.a + big_n as f64)).ln()
                                }
                            }
                        })
                        .collect();
                    let j = sample_log_categorical(&log_b, rng);
                    state.move_to_new(i, atom, j);
                }
                Ok(Some(accept))
            }
        }
    }

    /// Step 2: one exchange update per cluster. Returns the mean acceptance
    /// rates of the `b` and `c` blocks.
    pub fn update_atoms<R: RngCore>(&mut self, state: &mut DpmState, rng: &mut R) -> Result<(f64, f64)> {
        let members = state.members();
        let (mut acc_b, mut acc_c) = (0usize, 0usize);
        for (h, idx) in members.iter().enumerate() {
            let cluster: Vec<Member> = idx.iter().map(|&i| Member { x: self.data.row(i), y: self.data.y()[i] }).collect();
            let cfg = self.proposal_config(1.0 / (idx.len() as f64).sqrt());
            let up = exchange_update_atom(&state.atoms[h], &cluster, &cfg, rng)?;
            acc_b += usize::from(up.accepted_b);
            acc_c += usize::from(up.accepted_c);
            state.atoms[h] = up.atom;
        }
        let k = members.len() as f64;
        let rates = (acc_b as f64 / k, acc_c as f64 / k);
        self.steps.record(Some(rates.0), Some(rates.1));
        Ok(rates)
    }

    /// Step 3: redraw every basis index, then refresh `gamma`.
    pub fn update_basis_indices<R: RngCore>(&mut self, state: &mut DpmState, rng: &mut R) -> Result<()> {
        self.draw_basis_indices(state, rng)?;
        if let LocationWeights::Gamma { mass } = self.hyper.location_weights {
            self.update_gamma(state, mass / self.data.n() as f64, rng)?;
        }
        Ok(())
    }

    fn draw_basis_indices<R: RngCore>(&mut self, state: &mut DpmState, rng: &mut R) -> Result<()> {
        self.sync(state)?;
        let n = self.data.n();
        let members = state.members();
        let mut log_w = vec![0.0; n];
        for (h, idx) in members.iter().enumerate() {
            let m = idx.len() as f64;
            for (j, lw) in log_w.iter_mut().enumerate() {
                *lw = m * self.ln_gamma[j];
            }
            for &i in idx {
                for (lw, lk) in log_w.iter_mut().zip(self.kernel.log_k_row(i)) {
                    *lw += lk;
                }
            }
            if self.hyper.basis_update == BasisUpdate::WithUrnFactor {
                let own = state.basis()[h];
                for (j, lw) in log_w.iter_mut().enumerate() {
                    let others = (state.basis_counts()[j] - if j == own { idx.len() } else { 0 }) as f64;
                    *lw += ln_gamma(state.a + others) - ln_gamma(state.a + others + m);
                }
            }
            let j = sample_log_categorical(&log_w, rng);
            state.set_basis(h, j);
        }
        Ok(())
    }

    fn update_gamma<R: RngCore>(&mut self, state: &mut DpmState, kappa: f64, rng: &mut R) -> Result<()> {
        self.sync(state)?;
        let n = self.data.n();
        let t: Vec<f64> = (0..n).map(|i| rng.sample::<f64, _>(Exp1) * (-self.log_d[i]).exp()).collect();
        let mut rate = vec![kappa; n];
        for (i, ti) in t.iter().enumerate() {
            for (r, lk) in rate.iter_mut().zip(self.kernel.log_k_row(i)) {
                *r += ti * lk.exp();
            }
        }
        let counts = state.basis_counts();
        let gamma: Vec<f64> = (0..n)
            .map(|j| {
                let g = Gamma::new(kappa + counts[j] as f64, 1.0 / rate[j])
                    .map_err(|e| Error::InvalidParameter(format!("location weight update: {e}")))?;
                Ok(g.sample(rng))
            })
            .collect::<Result<_>>()?;
        if gamma.iter().all(|&g| g == 0.0) {
            return Err(Error::InconsistentState("every location weight underflowed".into()));
        }
        state.gamma = gamma;
        Ok(())
    }

    /// Steps 1 to 3 once.
    pub fn sweep<R: RngCore>(&mut self, state: &mut DpmState, rng: &mut R) -> Result<SweepStats> {
        let mut stats = SweepStats::default();
        for i in 0..self.data.n() {
            if let Some(accepted) = self.allocation_move(state, i, rng)? {
                stats.allocation_proposals += 1;
                stats.allocation_accepted += usize::from(accepted);
            }
        }
        (stats.atom_acceptance_b, stats.atom_acceptance_c) = self.update_atoms(state, rng)?;
        self.update_basis_indices(state, rng)?;
        Ok(stats)
    }
}

fn accept_log<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
}

fn sample_log_categorical<R: Rng + ?Sized>(log_w: &[f64], rng: &mut R) -> usize {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = log_w.iter().map(|l| (l - max).exp()).sum();
    let mut u = rng.random::<f64>() * total;
    for (j, l) in log_w.iter().enumerate() {
        let w = (l - max).exp();
        if u < w {
            return j;
        }
        u -= w;
    }
    log_w.iter().rposition(|l| *l > f64::NEG_INFINITY).unwrap_or(0)
}

/// Runs one chain from the single-cluster start and keeps every `thin`-th
/// post-burn-in state. Proposal scales adapt during burn-in only.
pub fn run_chain(data: &Dataset, hyper: &Hyperparams) -> Result<PosteriorDraws> {
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut sampler = DpmSampler::new(data, hyper)?;
    let mut state = sampler.initial_state(&mut rng)?;
    let mut snapshots = Vec::with_capacity(hyper.snapshot_count());
    let mut diag = ChainDiagnostics::default();
    for t in 1..=hyper.n_iter {
        let stats = sampler.sweep(&mut state, &mut rng)?;
        if t == hyper.burn_in {
            sampler.freeze_adaptation();
        }
        diag.clusters.push(state.k());
        diag.allocation_acceptance.push(if stats.allocation_proposals == 0 {
            0.0
        } else {
            stats.allocation_accepted as f64 / stats.allocation_proposals as f64
        });
        diag.atom_acceptance_b.push(stats.atom_acceptance_b);
        diag.atom_acceptance_c.push(stats.atom_acceptance_c);
        if t > hyper.burn_in && (t - hyper.burn_in).is_multiple_of(hyper.thin) {
            snapshots.push(state.snapshot(t));
        }
    }
    diag.final_step_mu = sampler.steps().step_mu();
    diag.final_step_nu = sampler.steps().step_nu();
    Ok(PosteriorDraws { snapshots, diagnostics: diag })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dpm::{local_weights, RegressionAtom};
    use approx::assert_abs_diff_eq;

    fn atom(v: f64) -> RegressionAtom {
        RegressionAtom::new(vec![v], vec![0.0])
    }

    #[test]
    fn single_subject_proposes_new_cluster_with_certainty() {
        let data = Dataset::intercept_only(vec![3]).unwrap();
        let mut s = DpmSampler::new(&data, &Hyperparams::default()).unwrap();
        let state = DpmState::new(vec![0], vec![0], vec![atom(1.0)], vec![1.0], 1.0, 1.0).unwrap();
        let w = s.allocation_prior_weights(&state, 0).unwrap();
        assert_eq!(w.new, 1.0);
        assert_eq!(w.existing, vec![0.0]);
    }

    #[test]
    fn hand_evaluated_weights_with_one_basis() {
        // n = 3, identical covariates, clusters {0}, {1, 2} both on basis 0
        let data = Dataset::intercept_only(vec![1, 2, 3]).unwrap();
        let mut s = DpmSampler::new(&data, &Hyperparams::default()).unwrap();
        let state =
            DpmState::new(vec![0, 1, 1], vec![0, 0], vec![atom(0.0), atom(1.0)], vec![1.0; 3], 1.0, 1.0).unwrap();
        // subject 2 removed: N_0 = 2, N_1 = N_2 = 0; b = 1/3 each
        let w = s.allocation_prior_weights(&state, 2).unwrap();
        assert_abs_diff_eq!(w.existing[0], (1.0 / 3.0) * 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w.existing[1], (1.0 / 3.0) * 1.0 / 3.0, epsilon = 1e-15);
        let direct = (1.0 / 3.0) * (1.0 / 3.0) + (1.0 / 3.0) * 1.0 + (1.0 / 3.0) * 1.0;
        assert_abs_diff_eq!(w.new, direct, epsilon = 1e-15);
    }

    #[test]
    fn weights_match_direct_formula_with_covariates() {
        let data = Dataset::with_intercept(vec![0, 1, 4, 2, 7], &[vec![0.1], vec![0.4], vec![0.5], vec![0.9], vec![1.3]])
            .unwrap();
        let mut s = DpmSampler::new(&data, &Hyperparams { psi: 0.7, a: 1.7, ..Default::default() }).unwrap();
        let gamma = vec![0.5, 2.0, 1.0, 0.1, 3.0];
        let state = DpmState::new(
            vec![0, 1, 0, 2, 1],
            vec![4, 1, 4],
            vec![atom(0.0), atom(1.0), atom(2.0)],
            gamma.clone(),
            1.7,
            0.7,
        )
        .unwrap();
        // standardised rows for the oracle
        let raw: Vec<f64> = vec![0.1, 0.4, 0.5, 0.9, 1.3];
        let mean = raw.iter().sum::<f64>() / 5.0;
        let sd = (raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 5.0).sqrt();
        let z: Vec<Vec<f64>> = raw.iter().map(|v| vec![(v - mean) / sd]).collect();
        for i in 0..5 {
            let b = local_weights(&z, i, 0.7, &gamma);
            let mut n_j = [0usize; 5];
            for (l, &lab) in state.labels().iter().enumerate() {
                if l != i {
                    n_j[state.basis()[lab]] += 1;
                }
            }
            let w0: f64 = (0..5).map(|j| 1.7 * b[j] / (1.7 + n_j[j] as f64)).sum();
            let w = s.allocation_prior_weights(&state, i).unwrap();
            assert_abs_diff_eq!(w.new, w0, epsilon = 1e-12);
            for h in 0..3 {
                let m = state.labels().iter().enumerate().filter(|&(l, &lab)| l != i && lab == h).count();
                let j = state.basis()[h];
                let want = if m == 0 { 0.0 } else { b[j] * m as f64 / (1.7 + n_j[j] as f64) };
                assert_abs_diff_eq!(w.existing[h], want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn large_concentration_favours_new_clusters() {
        let data = Dataset::intercept_only(vec![1, 2, 3, 4]).unwrap();
        let mut s = DpmSampler::new(&data, &Hyperparams { a: 1e9, ..Default::default() }).unwrap();
        let state =
            DpmState::new(vec![0, 0, 1, 1], vec![0, 3], vec![atom(0.0), atom(1.0)], vec![1.0; 4], 1e9, 1.0).unwrap();
        let w = s.allocation_prior_weights(&state, 0).unwrap();
        assert!(w.existing.iter().all(|&v| v < 1e-8 * w.new));
    }

    #[test]
    fn snapshot_bookkeeping_and_determinism() {
        let data = Dataset::with_intercept(vec![0, 2, 5, 1, 9, 3], &[vec![0.0], vec![0.2], vec![0.4], vec![0.6], vec![0.8], vec![1.0]])
            .unwrap();
        let h = Hyperparams { burn_in: 4, n_iter: 7, thin: 3, seed: 9, ..Default::default() };
        let a = run_chain(&data, &h).unwrap();
        assert_eq!(a.snapshots.len(), 1);
        assert_eq!(a.snapshots[0].iteration, 7);
        let b = run_chain(&data, &h).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn state_stays_consistent_across_sweeps() {
        let data = Dataset::with_intercept(
            vec![0, 1, 12, 15, 2, 20, 1, 0],
            &[vec![0.0], vec![0.1], vec![0.9], vec![1.0], vec![0.2], vec![0.8], vec![0.15], vec![0.05]],
        )
        .unwrap();
        for scheme in [LocationWeights::Uniform, LocationWeights::Gamma { mass: 1.0 }] {
            let h = Hyperparams { location_weights: scheme, ..Default::default() };
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let mut s = DpmSampler::new(&data, &h).unwrap();
            let mut state = s.initial_state(&mut rng).unwrap();
            for _ in 0..200 {
                s.sweep(&mut state, &mut rng).unwrap();
                state.check().unwrap();
            }
        }
    }
}
