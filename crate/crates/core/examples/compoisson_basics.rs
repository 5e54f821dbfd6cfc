//! COM-Poisson in the mean-like parametrisation: normalising constant,
//! dispersion, quantiles and exact sampling.
//!
//! ```text
//! cargo run --release --example compoisson_basics
//! ```

use count_dpm::compoisson::{log_normalizer, moments_exact, sample, ComPoisson};
use count_dpm::{ComPoissonParams, NormalizerConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> count_dpm::Result<()> {
    let cfg = NormalizerConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    println!("{:>5} {:>5} {:>10} {:>8} {:>9} {:>8} {:>12}", "mu", "nu", "log Z", "mean", "variance", "median", "draw mean");
    for nu in [0.25, 0.5, 1.0, 2.0, 4.0] {
        let params = ComPoissonParams::new(5.0, nu)?;
        let dist = ComPoisson::new(params, &cfg)?;
        let (mean, var) = moments_exact(params, &cfg)?;
        let draws: u64 = (0..20_000).map(|_| sample(params, &mut rng)).sum::<count_dpm::Result<u64>>()?;
        println!(
            "{:>5} {:>5} {:>10.4} {:>8.3} {:>9.3} {:>8} {:>12.3}",
            5.0,
            nu,
            log_normalizer(params, &cfg)?,
            mean,
            var,
            dist.quantile(0.5),
            draws as f64 / 20_000.0
        );
    }

    // nu = 1 is the Poisson distribution
    let pois = ComPoisson::new(ComPoissonParams::new(3.0, 1.0)?, &cfg)?;
    println!("\nP(Y = 0..5) at mu = 3, nu = 1:");
    for (y, p, cum) in pois.walk(1e-12).take(6) {
        println!("  {y}: {p:.6} (cdf {cum:.6})");
    }
    Ok(())
}
