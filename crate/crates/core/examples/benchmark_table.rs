//! A small version of the simulation benchmark: mean absolute error of
//! density regression and both jittering fits, plus crossing counts.
//!
//! ```text
//! cargo run --release --example benchmark_table [replications]
//! ```

use count_dpm::sim::{run_benchmark, summarize, write_benchmark_csv, BenchmarkConfig};

fn main() -> count_dpm::Result<()> {
    let replications = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(2);
    let cfg = BenchmarkConfig { sizes: vec![20, 100], replications, ..Default::default() };
    let rows = run_benchmark(&cfg)?;
    let table = summarize(&rows);

    println!("{:<9} {:>4}  {:<19} {:>11} {:>9} {:>10}", "scenario", "n", "method", "MAE (x=p)", "MAE grid", "crossings");
    for r in table.iter().filter(|r| r.metric == "mae_x_eq_p") {
        let other = |metric: &str| {
            table.iter().find(|o| o.scenario == r.scenario && o.n == r.n && o.method == r.method && o.metric == metric).map_or(f64::NAN, |o| o.value)
        };
        println!(
            "{:<9} {:>4}  {:<19} {:>11.4} {:>9.4} {:>10.1}",
            r.scenario,
            r.n,
            r.method,
            r.value,
            other("mae_grid"),
            other("crossings")
        );
    }
    println!("\nraw rows as CSV:");
    write_benchmark_csv(&rows[..6.min(rows.len())], std::io::stdout())?;
    Ok(())
}
