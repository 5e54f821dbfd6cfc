//! Mixture of two well-separated count populations, recovered by the
//! mixture sampler and summarised by the least-squares partition.
//!
//! ```text
//! cargo run --release --example two_cluster_dpm
//! ```

use count_dpm::dpm::{least_squares_partition, rand_index, run_chain, Hyperparams};
use count_dpm::Dataset;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

fn main() -> count_dpm::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut y = Vec::new();
    let mut truth = Vec::new();
    for (label, rate) in [(0, 1.0), (1, 20.0)] {
        let pois = Poisson::new(rate).expect("positive rate");
        for _ in 0..50 {
            y.push(pois.sample(&mut rng) as u64);
            truth.push(label);
        }
    }
    let data = Dataset::intercept_only(y.clone())?;
    let hyper = Hyperparams { burn_in: 1000, n_iter: 5000, seed: 3, ..Default::default() };
    let draws = run_chain(&data, &hyper)?;

    let modal = least_squares_partition(&draws);
    let k = modal.iter().max().map_or(0, |m| m + 1);
    println!("Rand index against the truth: {:.3}", rand_index(&modal, &truth));
    for h in 0..k {
        let mut members: Vec<u64> = (0..y.len()).filter(|&i| modal[i] == h).map(|i| y[i]).collect();
        members.sort_unstable();
        println!("cluster {h} ({} subjects): {members:?}", members.len());
    }
    let trace = &draws.diagnostics.clusters;
    println!("clusters over the last sweeps: {:?}", &trace[trace.len() - 10..]);
    Ok(())
}
