//! Density regression on the three-component mixture scenario: estimated
//! conditional quantiles against the true ones.
//!
//! ```text
//! cargo run --release --example density_regression_curves
//! ```

use count_dpm::dpm::{run_chain, Hyperparams};
use count_dpm::predictive::Predictor;
use count_dpm::sim::{Scenario, ScenarioKind};

fn main() -> count_dpm::Result<()> {
    let kind = ScenarioKind::Mixture;
    let data = Scenario { kind, n: 200, seed: 5 }.generate_seeded()?;
    let hyper = Hyperparams { seed: 5, ..Default::default() };
    let draws = run_chain(&data, &hyper)?;
    let pred = Predictor::new(&draws, &data, &hyper)?;

    let levels = [0.1, 0.25, 0.5, 0.75, 0.9];
    println!("{:>5}  {:<22} {:<22}", "x", "estimated", "true");
    for x in [0.05, 0.25, 0.5, 0.75, 0.95] {
        let pmf = pred.pmf(&[1.0, x])?;
        let est: Vec<u64> = levels.iter().map(|&p| pmf.quantile(p)).collect();
        let truth: Vec<u64> = levels.iter().map(|&p| kind.true_quantile(p, x)).collect();
        println!("{x:>5}  {:<22} {:<22}", format!("{est:?}"), format!("{truth:?}"));
    }
    let k = &draws.diagnostics.clusters;
    println!("\nmean number of clusters after burn-in: {:.2}", k[hyper.burn_in..].iter().sum::<usize>() as f64 / (k.len() - hyper.burn_in) as f64);
    Ok(())
}
