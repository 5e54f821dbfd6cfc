//! Partition posterior of a four-subject intercept-only mixture, computed
//! exactly by enumeration and grid integration, against the sampler.

use std::collections::HashMap;

use count_dpm::compoisson::log_normalizer;
use count_dpm::dpm::{BasisUpdate, DpmSampler, Hyperparams, LocationWeights};
use count_dpm::{ComPoissonParams, Dataset, NormalizerConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::function::factorial::ln_factorial;

fn canonical(labels: &[usize]) -> Vec<usize> {
    let mut map = HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![0]];
    for _ in 1..n {
        let mut next = Vec::new();
        for p in &out {
            let k = p.iter().max().unwrap() + 1;
            for l in 0..=k {
                let mut q = p.clone();
                q.push(l);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

fn ln_rising(a: f64, m: usize) -> f64 {
    (0..m).map(|t| (a + t as f64).ln()).sum()
}

/// Log prior of a partition: clusters pick bases uniformly among `n`, and
/// clusters sharing a basis follow a Chinese restaurant process.
fn log_prior(partition: &[usize], n: usize, a: f64) -> f64 {
    let k = partition.iter().max().unwrap() + 1;
    let sizes: Vec<usize> = (0..k).map(|h| partition.iter().filter(|&&l| l == h).count()).collect();
    // enumerate basis assignments of clusters; only which clusters share a
    // basis matters, so enumerate set partitions of the clusters
    let mut total = f64::NEG_INFINITY;
    for groups in set_partitions(k) {
        let g = groups.iter().max().unwrap() + 1;
        if g > n {
            continue;
        }
        // number of injective maps from groups to bases
        let ways: f64 = (0..g).map(|t| ((n - t) as f64).ln()).sum();
        let mut lp = ways - (partition.len() as f64) * (n as f64).ln();
        for grp in 0..g {
            let members: Vec<usize> = (0..k).filter(|&h| groups[h] == grp).collect();
            let big_n: usize = members.iter().map(|&h| sizes[h]).sum();
            lp += members.len() as f64 * a.ln() + members.iter().map(|&h| ln_factorial(sizes[h] as u64 - 1)).sum::<f64>()
                - ln_rising(a, big_n);
        }
        total = log_add(total, lp);
    }
    total
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

#[test]
fn sampler_matches_enumerated_partition_posterior() {
    let y = vec![0u64, 1, 6, 8];
    let n = y.len();
    let hyper = Hyperparams {
        a: 1.0,
        prior_sd_b: 1.5,
        prior_sd_c: 1.0,
        basis_update: BasisUpdate::WithUrnFactor,
        location_weights: LocationWeights::Uniform,
        ..Default::default()
    };

    // log marginal likelihood of every subset, by midpoint rule on a grid
    let step = 0.05;
    let half = 6.0;
    let cells = (2.0 * half / step) as usize;
    let cfg = NormalizerConfig::default();
    let mut log_ml: HashMap<u32, f64> = HashMap::new();
    let mut grid_terms: Vec<(f64, Vec<f64>)> = Vec::new();
    for ib in 0..cells {
        let bb = -half + (ib as f64 + 0.5) * step;
        for ic in 0..cells {
            let cc = -half + (ic as f64 + 0.5) * step;
            let p = ComPoissonParams::new(bb.exp(), cc.exp().max(hyper.nu_min)).unwrap();
            let lz = log_normalizer(p, &cfg).unwrap();
            let lprior = -0.5 * (bb / hyper.prior_sd_b).powi(2) - 0.5 * (cc / hyper.prior_sd_c).powi(2);
            let lp: Vec<f64> = y.iter().map(|&v| p.log_unnormalized(v) - lz).collect();
            grid_terms.push((lprior, lp));
        }
    }
    let norm = (2.0 * std::f64::consts::PI * hyper.prior_sd_b * hyper.prior_sd_c).ln() - 2.0 * step.ln();
    for mask in 1u32..(1 << n) {
        let mut acc = f64::NEG_INFINITY;
        for (lprior, lp) in &grid_terms {
            let v = lprior + (0..n).filter(|i| mask >> i & 1 == 1).map(|i| lp[i]).sum::<f64>();
            acc = log_add(acc, v);
        }
        log_ml.insert(mask, acc - norm);
    }

    let parts = set_partitions(n);
    let mut log_post: Vec<f64> = parts
        .iter()
        .map(|p| {
            let k = p.iter().max().unwrap() + 1;
            let lik: f64 = (0..k)
                .map(|h| {
                    let mask = (0..n).filter(|&i| p[i] == h).fold(0u32, |m, i| m | 1 << i);
                    log_ml[&mask]
                })
                .sum();
            log_prior(p, n, hyper.a) + lik
        })
        .collect();
    let z = log_post.iter().fold(f64::NEG_INFINITY, |a, &b| log_add(a, b));
    log_post.iter_mut().for_each(|v| *v = (*v - z).exp());

    let data = Dataset::intercept_only(y).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut sampler = DpmSampler::new(&data, &hyper).unwrap();
    let mut state = sampler.initial_state(&mut rng).unwrap();
    for _ in 0..2000 {
        sampler.sweep(&mut state, &mut rng).unwrap();
    }
    sampler.freeze_adaptation();
    let sweeps = 200_000;
    let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
    for _ in 0..sweeps {
        sampler.sweep(&mut state, &mut rng).unwrap();
        *counts.entry(canonical(state.labels())).or_default() += 1;
    }
    let mut worst: f64 = 0.0;
    for (p, exact) in parts.iter().zip(&log_post) {
        let freq = counts.get(p).copied().unwrap_or(0) as f64 / sweeps as f64;
        println!("{p:?} exact={exact:.4} sampled={freq:.4}");
        worst = worst.max((freq - exact).abs());
    }
    assert!(worst < 0.01, "largest deviation {worst}");
}
