//! The file-based workflow: a headed CSV in, a fit with its draws, then
//! quantile curves predicted from the saved draws.
//!
//! ```text
//! cargo run --release --example csv_fit_predict
//! ```

use std::fs;

use count_dpm::io::{self, GridSpec, Mode, RunConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};

fn main() -> count_dpm::Result<()> {
    let dir = std::env::temp_dir().join("count-dpm-example");
    fs::create_dir_all(&dir)?;

    // overdispersion that grows with the deprivation score
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut csv = String::from("zone,deprivation,count\n");
    for zone in 0..127 {
        let s: f64 = rng.random_range(0.0..60.0);
        let mean = (0.5 + 0.04 * s).exp();
        let shape = 30.0 / (1.0 + s / 6.0);
        let rate = Gamma::new(shape, mean / shape).expect("valid gamma").sample(&mut rng);
        let y = Poisson::new(rate.max(1e-9)).expect("positive rate").sample(&mut rng) as u64;
        csv.push_str(&format!("{zone},{s:.2},{y}\n"));
    }
    let data = dir.join("counts.csv");
    fs::write(&data, csv)?;

    let mut cfg = RunConfig {
        mode: Mode::Fit,
        seed: 1,
        data: Some(data),
        response: "count".into(),
        covariates: Some(vec!["deprivation".into()]),
        out: dir.join("fit"),
        quantiles: vec![0.1, 0.5, 0.95],
        grid: GridSpec { points: 7, ..Default::default() },
        ..Default::default()
    };
    for path in io::run(&cfg)? {
        println!("wrote {}", path.display());
    }
    cfg.mode = Mode::Predict;
    let written = io::run(&cfg)?;
    println!();
    print!("{}", fs::read_to_string(&written[0])?);
    Ok(())
}
