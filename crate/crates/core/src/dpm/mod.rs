//! Covariate-dependent Dirichlet process mixture of COM-Poisson regressions.
//!
//! Subject `i` carries regression coefficients `phi_i = theta_{S_i}`. Each
//! cluster `h` is attached to a basis distribution `C_h` (an anchor subject),
//! and subject `i` reaches basis `j` with weight
//! `b_ij ∝ gamma_j exp(-psi |x_i - x_j|^2)`, so nearby subjects share atoms
//! more readily than distant ones.
//!
//! One sweep of the sampler ([`DpmSampler::sweep`]) performs
//!
//! 1. an allocation move per subject, proposed from the conditional prior and
//!    accepted with the exchange ratio,
//! 2. an exchange-algorithm update of every atom,
//! 3. a Gibbs draw of every basis index, then a refresh of `gamma`.

mod kernel;
mod partition;
mod sampler;

use rand::RngCore;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::compoisson::{ComPoissonParams, NormalizerConfig, DEFAULT_NU_MIN};
use crate::error::{Error, Result};
use crate::exchange::BaseMeasure;

pub use kernel::local_weights;
pub(crate) use kernel::Kernel;

pub use partition::{least_squares_partition, rand_index, similarity_matrix};
pub use sampler::{run_chain, AllocationWeights, DpmSampler, SweepStats};

const LOG_MU_BOUND: f64 = 20.0;
const LOG_NU_MAX: f64 = 20.0;

/// Coefficients of one mixture component: `log mu = x'b`, `log nu = x'c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionAtom {
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl RegressionAtom {
    pub fn new(b: Vec<f64>, c: Vec<f64>) -> Self {
        assert_eq!(b.len(), c.len(), "b and c must have the same length");
        Self { b, c }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// COM-Poisson parameters at design row `x`. The linear predictors are
    /// clamped (`|x'b| <= 20`, `x'c <= 20`) and `nu` is floored at `nu_min`.
    pub fn params_at(&self, x: &[f64], nu_min: f64) -> ComPoissonParams {
        let eta_b = dot(&self.b, x).clamp(-LOG_MU_BOUND, LOG_MU_BOUND);
        let eta_c = dot(&self.c, x).min(LOG_NU_MAX);
        ComPoissonParams::from_parts_unchecked(eta_b.exp(), eta_c.exp().max(nu_min))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// Independent zero-mean normals on every coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalBaseMeasure {
    pub sd_b: f64,
    pub sd_c: f64,
}

impl NormalBaseMeasure {
    pub fn new(sd_b: f64, sd_c: f64) -> Self {
        Self { sd_b, sd_c }
    }
}

impl BaseMeasure for NormalBaseMeasure {
    fn log_density(&self, atom: &RegressionAtom) -> f64 {
        let block = |v: &[f64], sd: f64| {
            let k = v.len() as f64;
            -0.5 * v.iter().map(|t| t * t).sum::<f64>() / (sd * sd)
                - k * (sd.ln() + 0.5 * (2.0 * std::f64::consts::PI).ln())
        };
        block(&atom.b, self.sd_b) + block(&atom.c, self.sd_c)
    }

    fn draw(&self, d: usize, rng: &mut dyn RngCore) -> RegressionAtom {
        let nb = Normal::new(0.0, self.sd_b).expect("finite sd");
        let nc = Normal::new(0.0, self.sd_c).expect("finite sd");
        let b = (0..d).map(|_| nb.sample(rng)).collect();
        let c = (0..d).map(|_| nc.sample(rng)).collect();
        RegressionAtom { b, c }
    }
}

/// How the location weights `gamma` evolve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum LocationWeights {
    /// `gamma_j = 1` throughout.
    Uniform,
    /// `gamma_j ~ Gamma(kappa, kappa)` a priori with `kappa = mass / n`,
    /// updated by data augmentation: `T_i ~ Exp(sum_l gamma_l K_il)`, then
    /// `gamma_j ~ Gamma(kappa + N_j, kappa + sum_i T_i K_ij)` where `N_j`
    /// counts subjects whose cluster is attached to basis `j`. Small `mass`
    /// concentrates the weights on few bases.
    Gamma { mass: f64 },
}

impl Default for LocationWeights {
    fn default() -> Self {
        LocationWeights::Gamma { mass: 1.0 }
    }
}

/// Conditional used for basis indices, both when a new cluster is opened and
/// in the per-cluster redraw.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisUpdate {
    /// `P(C_h = j) ∝ prod_{i in h} b_ij`, and `b_i` for a new cluster.
    #[default]
    KernelOnly,
    /// The same kernel products times the urn factor of basis `j`:
    /// `Gamma(a + N_j) / Gamma(a + N_j + m_h)` in the redraw and
    /// `a / (a + N_j)` for a new cluster, `N_j` counted without the cluster
    /// (or subject) being placed. These are the exact full conditionals of
    /// the joint prior that the allocation weights are derived from.
    WithUrnFactor,
}

/// Prior scales, DP settings, chain length and tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub prior_sd_b: f64,
    pub prior_sd_c: f64,
    /// DP concentration.
    pub a: f64,
    /// Kernel bandwidth on standardised covariates.
    pub psi: f64,
    pub burn_in: usize,
    pub n_iter: usize,
    pub thin: usize,
    pub seed: u64,
    pub nu_min: f64,
    /// Initial random-walk scales; adapted during burn-in.
    pub step_mu: f64,
    pub step_nu: f64,
    /// Exchange updates applied to the initial single cluster.
    pub warmup_updates: usize,
    pub location_weights: LocationWeights,
    pub basis_update: BasisUpdate,
    pub normalizer: NormalizerConfig,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            prior_sd_b: 2.0,
            prior_sd_c: 2.0,
            a: 1.0,
            psi: 1.0,
            burn_in: 1000,
            n_iter: 3000,
            thin: 5,
            seed: 1,
            nu_min: DEFAULT_NU_MIN,
            step_mu: 0.2,
            step_nu: 0.2,
            warmup_updates: 50,
            location_weights: LocationWeights::default(),
            basis_update: BasisUpdate::default(),
            normalizer: NormalizerConfig::default(),
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("prior_sd_b", self.prior_sd_b),
            ("prior_sd_c", self.prior_sd_c),
            ("a", self.a),
            ("psi", self.psi),
            ("nu_min", self.nu_min),
            ("step_mu", self.step_mu),
            ("step_nu", self.step_nu),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if self.n_iter <= self.burn_in {
            return Err(Error::Config(format!(
                "n_iter ({}) must exceed burn_in ({})",
                self.n_iter, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if let LocationWeights::Gamma { mass } = self.location_weights {
            if !(mass.is_finite() && mass > 0.0) {
                return Err(Error::Config(format!("location weight mass must be finite and > 0, got {mass}")));
            }
        }
        self.normalizer.validate()
    }

    pub fn base_measure(&self) -> NormalBaseMeasure {
        NormalBaseMeasure::new(self.prior_sd_b, self.prior_sd_c)
    }

    /// Number of snapshots a chain with these settings records.
    pub fn snapshot_count(&self) -> usize {
        (self.n_iter - self.burn_in) / self.thin
    }
}

/// Allocation state of the sampler. Labels and basis indices are 0-based;
/// clusters are numbered in order of first appearance in `labels`.
#[derive(Debug, Clone, PartialEq)]
pub struct DpmState {
    labels: Vec<usize>,
    basis: Vec<usize>,
    atoms: Vec<RegressionAtom>,
    gamma: Vec<f64>,
    pub a: f64,
    pub psi: f64,
    sizes: Vec<usize>,
    basis_counts: Vec<usize>,
}

impl DpmState {
    pub fn new(
        labels: Vec<usize>,
        basis: Vec<usize>,
        atoms: Vec<RegressionAtom>,
        gamma: Vec<f64>,
        a: f64,
        psi: f64,
    ) -> Result<Self> {
        let n = labels.len();
        let k = atoms.len();
        let mut sizes = vec![0; k];
        for &l in &labels {
            if l >= k {
                return Err(Error::InconsistentState(format!("label {l} with only {k} atoms")));
            }
            sizes[l] += 1;
        }
        let mut state = Self { labels, basis, atoms, gamma, a, psi, sizes, basis_counts: vec![0; n] };
        if state.basis.len() != k {
            return Err(Error::InconsistentState(format!("{} basis indices for {k} clusters", state.basis.len())));
        }
        if state.gamma.len() != n {
            return Err(Error::LengthMismatch { expected: n, found: state.gamma.len() });
        }
        for h in 0..k {
            let j = state.basis[h];
            if j >= n {
                return Err(Error::InconsistentState(format!("basis index {j} out of range")));
            }
            state.basis_counts[j] += state.sizes[h];
        }
        state.check()?;
        Ok(state)
    }

    /// Verifies every structural invariant.
    pub fn check(&self) -> Result<()> {
        let n = self.labels.len();
        let k = self.atoms.len();
        let bad = |m: String| Err(Error::InconsistentState(m));
        if n == 0 {
            return bad("no subjects".into());
        }
        if k == 0 || k > n {
            return bad(format!("{k} clusters for {n} subjects"));
        }
        if self.basis.len() != k || self.sizes.len() != k {
            return bad("cluster arrays disagree in length".into());
        }
        let mut next = 0;
        let mut counts = vec![0; k];
        for &l in &self.labels {
            if l > next || l >= k {
                return bad(format!("label {l} breaks first-appearance order"));
            }
            if l == next {
                next += 1;
            }
            counts[l] += 1;
        }
        if next != k {
            return bad("empty cluster retained".into());
        }
        if counts != self.sizes {
            return bad("cluster sizes out of date".into());
        }
        let mut bc = vec![0; n];
        for h in 0..k {
            if self.basis[h] >= n {
                return bad(format!("basis index {} out of range", self.basis[h]));
            }
            bc[self.basis[h]] += self.sizes[h];
        }
        if bc != self.basis_counts {
            return bad("basis counts out of date".into());
        }
        if self.atoms.iter().any(|t| t.b.iter().chain(&t.c).any(|v| !v.is_finite())) {
            return bad("non-finite atom coefficient".into());
        }
        if self.gamma.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return bad("location weights must be finite and non-negative".into());
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn k(&self) -> usize {
        self.atoms.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn basis(&self) -> &[usize] {
        &self.basis
    }

    pub fn atoms(&self) -> &[RegressionAtom] {
        &self.atoms
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn cluster_sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// `N_j`: subjects whose cluster is attached to basis `j`.
    pub fn basis_counts(&self) -> &[usize] {
        &self.basis_counts
    }

    /// Subject indices of every cluster, in cluster order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self.sizes.iter().map(|&m| Vec::with_capacity(m)).collect();
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    pub fn snapshot(&self, iteration: usize) -> Snapshot {
        Snapshot {
            iteration,
            labels: self.labels.clone(),
            basis: self.basis.clone(),
            atoms: self.atoms.clone(),
            gamma: self.gamma.clone(),
        }
    }

    fn detach(&mut self, i: usize) {
        let h = self.labels[i];
        self.sizes[h] -= 1;
        self.basis_counts[self.basis[h]] -= 1;
    }

    fn attach(&mut self, i: usize, h: usize) {
        self.labels[i] = h;
        self.sizes[h] += 1;
        self.basis_counts[self.basis[h]] += 1;
    }

    fn move_to(&mut self, i: usize, h: usize) {
        self.detach(i);
        self.attach(i, h);
        self.canonicalize();
    }

    fn move_to_new(&mut self, i: usize, atom: RegressionAtom, basis: usize) {
        self.detach(i);
        self.atoms.push(atom);
        self.basis.push(basis);
        self.sizes.push(0);
        self.attach(i, self.atoms.len() - 1);
        self.canonicalize();
    }

    fn set_basis(&mut self, h: usize, j: usize) {
        let m = self.sizes[h];
        self.basis_counts[self.basis[h]] -= m;
        self.basis[h] = j;
        self.basis_counts[j] += m;
    }

    /// Drops empty clusters and renumbers by first appearance.
    fn canonicalize(&mut self) {
        let k = self.atoms.len();
        let mut map = vec![usize::MAX; k];
        let mut next = 0;
        for &l in &self.labels {
            if map[l] == usize::MAX {
                map[l] = next;
                next += 1;
            }
        }
        if next == k && map.iter().enumerate().all(|(h, &m)| h == m) {
            return;
        }
        let mut atoms: Vec<Option<RegressionAtom>> = std::mem::take(&mut self.atoms).into_iter().map(Some).collect();
        let mut new_atoms = vec![None; next];
        let mut new_basis = vec![0; next];
        let mut new_sizes = vec![0; next];
        for h in 0..k {
            let m = map[h];
            if m != usize::MAX {
                new_atoms[m] = atoms[h].take();
                new_basis[m] = self.basis[h];
                new_sizes[m] = self.sizes[h];
            }
        }
        self.atoms = new_atoms.into_iter().map(|a| a.expect("mapped cluster")).collect();
        self.basis = new_basis;
        self.sizes = new_sizes;
        for l in self.labels.iter_mut() {
            *l = map[*l];
        }
    }
}

/// One recorded chain state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub iteration: usize,
    pub labels: Vec<usize>,
    pub basis: Vec<usize>,
    pub atoms: Vec<RegressionAtom>,
    pub gamma: Vec<f64>,
}

impl Snapshot {
    pub fn k(&self) -> usize {
        self.atoms.len()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.atoms.len()];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    pub fn basis_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.labels.len()];
        for &l in &self.labels {
            counts[self.basis[l]] += 1;
        }
        counts
    }
}

/// Per-sweep trace of the chain.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub clusters: Vec<usize>,
    /// Accepted allocation moves over proposals that left the current cluster.
    pub allocation_acceptance: Vec<f64>,
    pub atom_acceptance_b: Vec<f64>,
    pub atom_acceptance_c: Vec<f64>,
    pub final_step_mu: f64,
    pub final_step_nu: f64,
}

/// Thinned post-burn-in snapshots of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub snapshots: Vec<Snapshot>,
    pub diagnostics: ChainDiagnostics,
}
