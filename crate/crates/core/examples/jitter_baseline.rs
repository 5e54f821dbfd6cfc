//! Jittered quantile regression with linear and spline bases, and the
//! crossings it can produce.
//!
//! ```text
//! cargo run --release --example jitter_baseline
//! ```

use count_dpm::jitter::{detect_crossing, estimate_count_quantile, fit_jittered, BasisKind, JitterConfig};
use count_dpm::sim::{Scenario, ScenarioKind, PRIMARY_LEVELS};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> count_dpm::Result<()> {
    let kind = ScenarioKind::Mixture;
    let data = Scenario { kind, n: 100, seed: 9 }.generate_seeded()?;
    let cov: Vec<Vec<f64>> = (0..data.n()).map(|i| data.covariates(i).to_vec()).collect();
    let grid: Vec<Vec<f64>> = (0..50).map(|g| vec![(g as f64 + 0.5) / 50.0]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(9);

    for basis in [BasisKind::Linear, BasisKind::Spline] {
        let fits = PRIMARY_LEVELS
            .iter()
            .map(|&p| fit_jittered(data.y(), &cov, p, basis, &JitterConfig::default(), &mut rng))
            .collect::<count_dpm::Result<Vec<_>>>()?;
        println!("{basis:?} basis");
        for x in [0.1, 0.5, 0.9] {
            let q: Vec<u64> = fits.iter().map(|f| estimate_count_quantile(&[x], f)).collect();
            let t: Vec<u64> = PRIMARY_LEVELS.iter().map(|&p| kind.true_quantile(p, x)).collect();
            println!("  x = {x}: estimated {q:?}\n          true      {t:?}");
        }
        let crossings = detect_crossing(&fits, &grid);
        println!("  crossing violations on a 50-point grid: {}", crossings.len());
        if let Some(c) = crossings.first() {
            println!("  first: x = {:.2}, Q({}) > Q({})", c.x[0], c.p_low, c.p_high);
        }
    }
    Ok(())
}
