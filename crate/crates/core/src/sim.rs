//! Simulation scenarios with known conditional quantiles, and the MAE
//! benchmark of density regression against jittered quantile regression.
//!
//! Both scenarios draw `x ~ Uniform(0, 1)`:
//!
//! * `binomial`: `Y | x ~ Binomial(10, 0.3 x)`;
//! * `mixture`: `Y | x ~ 0.4 Poisson(exp(1 + x)) + 0.2 Binomial(10, 1 - x)
//!   + 0.4 Geometric(0.2)`, the geometric counting failures before the
//!   first success (`P(y) = 0.2 * 0.8^y`).

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::factorial::{ln_binomial, ln_factorial};

use crate::data::Dataset;
use crate::dpm::{run_chain, Hyperparams};
use crate::error::{Error, Result};
use crate::jitter::{self, BasisKind, JitterConfig};
use crate::predictive::Predictor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Binomial,
    Mixture,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Binomial => "binomial",
            ScenarioKind::Mixture => "mixture",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "binomial" => Ok(ScenarioKind::Binomial),
            "mixture" => Ok(ScenarioKind::Mixture),
            other => Err(Error::Config(format!("unknown scenario {other:?}"))),
        }
    }

    /// One draw of `Y | x`.
    pub fn draw<R: Rng + ?Sized>(self, x: f64, rng: &mut R) -> u64 {
        match self {
            ScenarioKind::Binomial => binomial(10, 0.3 * x, rng),
            ScenarioKind::Mixture => {
                let u: f64 = rng.random();
                if u < 0.4 {
                    Poisson::new((1.0 + x).exp()).expect("positive rate").sample(rng) as u64
                } else if u < 0.6 {
                    binomial(10, 1.0 - x, rng)
                } else {
                    // inversion: floor(log V / log 0.8)
                    let v: f64 = 1.0 - rng.random::<f64>();
                    (v.ln() / 0.8f64.ln()).floor() as u64
                }
            }
        }
    }

    pub fn pmf(self, y: u64, x: f64) -> f64 {
        match self {
            ScenarioKind::Binomial => binomial_pmf(y, 10, 0.3 * x),
            ScenarioKind::Mixture => {
                let lambda = (1.0 + x).exp();
                let pois = (-lambda + y as f64 * lambda.ln() - ln_factorial(y)).exp();
                0.4 * pois + 0.2 * binomial_pmf(y, 10, 1.0 - x) + 0.4 * 0.2 * 0.8f64.powf(y as f64)
            }
        }
    }

    pub fn cdf(self, y: u64, x: f64) -> f64 {
        (0..=y).map(|v| self.pmf(v, x)).sum::<f64>().min(1.0)
    }

    /// `inf { y : F(y | x) >= p }`, by scanning the cdf.
    pub fn true_quantile(self, p: f64, x: f64) -> u64 {
        let mut cum = 0.0;
        let mut y = 0;
        loop {
            cum += self.pmf(y, x);
            // 1e-12 absorbs rounding when p sits exactly on a cdf step
            if cum >= p - 1e-12 || y > 10_000 {
                return y;
            }
            y += 1;
        }
    }
}

fn binomial<R: Rng + ?Sized>(n: u64, prob: f64, rng: &mut R) -> u64 {
    Binomial::new(n, prob.clamp(0.0, 1.0)).expect("valid binomial").sample(rng)
}

fn binomial_pmf(y: u64, n: u64, prob: f64) -> f64 {
    if y > n {
        return 0.0;
    }
    if prob <= 0.0 {
        return f64::from(u8::from(y == 0));
    }
    if prob >= 1.0 {
        return f64::from(u8::from(y == n));
    }
    (ln_binomial(n, y) + y as f64 * prob.ln() + (n - y) as f64 * (1.0 - prob).ln()).exp()
}

/// One simulated dataset specification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub n: usize,
    pub seed: u64,
}

impl Scenario {
    /// Counts and `x ~ Uniform(0, 1)` with an intercept column.
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Dataset> {
        let mut y = Vec::with_capacity(self.n);
        let mut x = Vec::with_capacity(self.n);
        for _ in 0..self.n {
            let xi: f64 = rng.random();
            y.push(self.kind.draw(xi, rng));
            x.push(vec![xi]);
        }
        let mut data = Dataset::with_intercept(y, &x)?;
        data.covariate_names = vec!["x".into()];
        Ok(data)
    }

    /// [`Scenario::generate`] with a generator seeded from `self.seed`.
    pub fn generate_seeded(&self) -> Result<Dataset> {
        self.generate(&mut ChaCha8Rng::seed_from_u64(self.seed))
    }
}

/// Mean absolute difference.
pub fn mae(estimates: &[u64], truths: &[u64]) -> Result<f64> {
    if estimates.len() != truths.len() {
        return Err(Error::LengthMismatch { expected: truths.len(), found: estimates.len() });
    }
    if truths.is_empty() {
        return Err(Error::InvalidParameter("mean absolute error of nothing".into()));
    }
    let total: f64 = estimates.iter().zip(truths).map(|(&e, &t)| (e as f64 - t as f64).abs()).sum();
    Ok(total / truths.len() as f64)
}

/// Quantile levels of the primary metric, each evaluated at `x = p`.
pub const PRIMARY_LEVELS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
/// Levels of the secondary metric, each averaged over [`grid`].
pub const SECONDARY_LEVELS: [f64; 3] = [0.1, 0.5, 0.9];

/// `points` equally spaced covariate values strictly inside `(0, 1)`.
pub fn grid(points: usize) -> Vec<f64> {
    (0..points).map(|g| (g as f64 + 0.5) / points as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    DensityRegression,
    JitterLinear,
    JitterSpline,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::DensityRegression, Method::JitterLinear, Method::JitterSpline];

    pub fn name(self) -> &'static str {
        match self {
            Method::DensityRegression => "density_regression",
            Method::JitterLinear => "jitter_linear",
            Method::JitterSpline => "jitter_spline",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub scenarios: Vec<ScenarioKind>,
    pub sizes: Vec<usize>,
    pub methods: Vec<Method>,
    pub replications: usize,
    pub seed: u64,
    pub grid_points: usize,
    pub hyper: Hyperparams,
    pub jitter: JitterConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            scenarios: vec![ScenarioKind::Binomial, ScenarioKind::Mixture],
            sizes: vec![20, 100, 500],
            methods: Method::ALL.to_vec(),
            replications: 5,
            seed: 1,
            grid_points: 50,
            hyper: Hyperparams::default(),
            jitter: JitterConfig::default(),
        }
    }
}

/// One line of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub scenario: String,
    pub n: usize,
    pub method: String,
    pub metric: String,
    pub value: f64,
    pub seed: u64,
}

/// Quantiles of one fitted method: `values[g][l]` at covariate `xs[g]` and
/// level `levels[l]`.
fn predict_table(
    method: Method,
    data: &Dataset,
    levels: &[f64],
    xs: &[f64],
    cfg: &BenchmarkConfig,
    seed: u64,
) -> Result<Vec<Vec<u64>>> {
    match method {
        Method::DensityRegression => {
            let hyper = Hyperparams { seed, ..cfg.hyper.clone() };
            let draws = run_chain(data, &hyper)?;
            let pred = Predictor::new(&draws, data, &hyper)?;
            xs.iter()
                .map(|&x| {
                    let pmf = pred.pmf(&[1.0, x])?;
                    Ok(levels.iter().map(|&p| pmf.quantile(p)).collect())
                })
                .collect()
        }
        Method::JitterLinear | Method::JitterSpline => {
            let kind = if method == Method::JitterLinear { BasisKind::Linear } else { BasisKind::Spline };
            let covariates: Vec<Vec<f64>> = (0..data.n()).map(|i| data.covariates(i).to_vec()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let fits = levels
                .iter()
                .map(|&p| jitter::fit_jittered(data.y(), &covariates, p, kind, &cfg.jitter, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            Ok(xs.iter().map(|&x| fits.iter().map(|f| jitter::estimate_count_quantile(&[x], f)).collect()).collect())
        }
    }
}

/// Deterministic per-cell seed.
pub fn cell_seed(master: u64, scenario: ScenarioKind, n: usize, replication: usize) -> u64 {
    let mut z = master ^ 0x6a09_e667_f3bc_c908;
    for v in [scenario as u64, n as u64, replication as u64] {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15) ^ v;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}

/// Fits every method on every (scenario, n, replication) dataset. Metrics
/// per fit:
///
/// * `mae_x_eq_p`: MAE over `p = 0.1..0.9`, each at `x = p`;
/// * `mae_grid`: MAE over the grid at `p = 0.1, 0.5, 0.9`;
/// * `crossings`: violations of monotonicity in `p` over the grid with
///   all nine levels.
///
/// Cells run on up to `available_parallelism` threads. Each cell's seed
/// depends only on its coordinates, and rows come back in cell order, so
/// the table does not depend on the thread count.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<Vec<BenchmarkRow>> {
    let threads = std::thread::available_parallelism().map_or(1, |t| t.get());
    run_benchmark_with_threads(cfg, threads)
}

pub fn run_benchmark_with_threads(cfg: &BenchmarkConfig, threads: usize) -> Result<Vec<BenchmarkRow>> {
    let xs = grid(cfg.grid_points);
    let mut cells = Vec::new();
    for &kind in &cfg.scenarios {
        for &n in &cfg.sizes {
            for r in 0..cfg.replications {
                for &method in &cfg.methods {
                    cells.push((kind, n, r, method));
                }
            }
        }
    }
    let run_cell = |&(kind, n, r, method): &(ScenarioKind, usize, usize, Method)| -> Result<Vec<BenchmarkRow>> {
        let seed = cell_seed(cfg.seed, kind, n, r);
        let data = Scenario { kind, n, seed }.generate_seeded()?;
        let metrics = evaluate(method, kind, &data, &xs, cfg, seed)?;
        Ok(metrics
            .into_iter()
            .map(|(metric, value)| BenchmarkRow {
                scenario: kind.name().into(),
                n,
                method: method.name().into(),
                metric: metric.into(),
                value,
                seed,
            })
            .collect())
    };

    let threads = threads.clamp(1, cells.len().max(1));
    let mut results: Vec<Option<Result<Vec<BenchmarkRow>>>> = (0..cells.len()).map(|_| None).collect();
    if threads == 1 {
        for (slot, cell) in results.iter_mut().zip(&cells) {
            *slot = Some(run_cell(cell));
        }
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let done = std::sync::Mutex::new(&mut results);
        std::thread::scope(|scope| {
            for _ in 0..threads {
                scope.spawn(|| loop {
                    let c = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if c >= cells.len() {
                        break;
                    }
                    let out = run_cell(&cells[c]);
                    done.lock().expect("no panics while holding the lock")[c] = Some(out);
                });
            }
        });
    }
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r.expect("every cell ran")?);
    }
    Ok(rows)
}

fn evaluate(
    method: Method,
    kind: ScenarioKind,
    data: &Dataset,
    xs: &[f64],
    cfg: &BenchmarkConfig,
    seed: u64,
) -> Result<Vec<(&'static str, f64)>> {
    // one fit serves all three metrics: levels 0.1..0.9 on the design points
    // x = p followed by the grid
    let mut design: Vec<f64> = PRIMARY_LEVELS.to_vec();
    design.extend_from_slice(xs);
    let table = predict_table(method, data, &PRIMARY_LEVELS, &design, cfg, seed)?;

    let est: Vec<u64> = (0..PRIMARY_LEVELS.len()).map(|l| table[l][l]).collect();
    let truth: Vec<u64> = PRIMARY_LEVELS.iter().map(|&p| kind.true_quantile(p, p)).collect();
    let primary = mae(&est, &truth)?;

    let grid_rows = &table[PRIMARY_LEVELS.len()..];
    let (mut est, mut truth) = (Vec::new(), Vec::new());
    for &p in &SECONDARY_LEVELS {
        let l = PRIMARY_LEVELS.iter().position(|&q| q == p).expect("secondary level is a primary level");
        for (g, &x) in xs.iter().enumerate() {
            est.push(grid_rows[g][l]);
            truth.push(kind.true_quantile(p, x));
        }
    }
    let secondary = mae(&est, &truth)?;

    let grid_x: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
    let crossings = jitter::find_crossings(&PRIMARY_LEVELS, &grid_x, grid_rows).len();
    Ok(vec![("mae_x_eq_p", primary), ("mae_grid", secondary), ("crossings", crossings as f64)])
}

/// Mean of `value` per (scenario, n, method, metric), in first-seen order.
pub fn summarize(rows: &[BenchmarkRow]) -> Vec<BenchmarkRow> {
    let mut out: Vec<(BenchmarkRow, usize)> = Vec::new();
    for r in rows {
        let key = |o: &BenchmarkRow| o.scenario == r.scenario && o.n == r.n && o.method == r.method && o.metric == r.metric;
        match out.iter_mut().find(|(o, _)| key(o)) {
            Some((o, c)) => {
                o.value += r.value;
                *c += 1;
            }
            None => out.push((BenchmarkRow { seed: 0, ..r.clone() }, 1)),
        }
    }
    out.into_iter().map(|(mut o, c)| {
        o.value /= c as f64;
        o
    })
    .collect()
}

/// CSV with header `scenario,n,method,metric,value,seed`.
pub fn write_benchmark_csv<W: Write>(rows: &[BenchmarkRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(["scenario", "n", "method", "metric", "value", "seed"])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn binomial_truths() {
        for p in [0.1, 0.5, 0.99] {
            assert_eq!(ScenarioKind::Binomial.true_quantile(p, 0.0), 0);
        }
        // Binomial(10, 0.3): F(2) = 0.3828, F(3) = 0.6496
        assert_eq!(ScenarioKind::Binomial.true_quantile(0.5, 1.0), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..1000).all(|_| ScenarioKind::Binomial.draw(0.0, &mut rng) == 0));
    }

    #[test]
    fn mixture_pmf_sums_to_one() {
        for x in [0.0, 0.3, 1.0] {
            let total: f64 = (0..400).map(|y| ScenarioKind::Mixture.pmf(y, x)).sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn mae_values() {
        assert_eq!(mae(&[1, 2, 3], &[1, 2, 3]).unwrap(), 0.0);
        assert_eq!(mae(&[2, 1, 4], &[1, 2, 3]).unwrap(), 1.0);
        assert!(mae(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn cell_seeds_differ() {
        let a = cell_seed(1, ScenarioKind::Binomial, 100, 0);
        assert_ne!(a, cell_seed(1, ScenarioKind::Binomial, 100, 1));
        assert_ne!(a, cell_seed(1, ScenarioKind::Mixture, 100, 0));
        assert_eq!(a, cell_seed(1, ScenarioKind::Binomial, 100, 0));
    }

    #[test]
    fn table_does_not_depend_on_threads() {
        let cfg = BenchmarkConfig {
            sizes: vec![15],
            replications: 2,
            grid_points: 4,
            hyper: Hyperparams { burn_in: 20, n_iter: 60, thin: 4, ..Default::default() },
            jitter: JitterConfig { m_jitter: 3, ..Default::default() },
            ..Default::default()
        };
        let one = run_benchmark_with_threads(&cfg, 1).unwrap();
        assert_eq!(one.len(), 2 * 2 * 3 * 3);
        assert_eq!(one, run_benchmark_with_threads(&cfg, 3).unwrap());
    }
}
