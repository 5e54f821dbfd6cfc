//! Posterior of an intercept-only COM-Poisson model by the exchange
//! algorithm. No normalising constant is evaluated along the way.
//!
//! ```text
//! cargo run --release --example exchange_intercept
//! ```

use count_dpm::compoisson::{normalizer_calls, sample};
use count_dpm::dpm::{NormalBaseMeasure, RegressionAtom};
use count_dpm::exchange::{exchange_update_atom, ExchangeProposalConfig, Member};
use count_dpm::ComPoissonParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> count_dpm::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    // underdispersed counts
    let truth = ComPoissonParams::new(4.0, 2.5)?;
    let y: Vec<u64> = (0..80).map(|_| sample(truth, &mut rng)).collect::<count_dpm::Result<_>>()?;

    let one = [1.0];
    let members: Vec<Member> = y.iter().map(|&v| Member { x: &one, y: v }).collect();
    let prior = NormalBaseMeasure::new(2.0, 2.0);
    let cfg = ExchangeProposalConfig { step_mu: 0.08, step_nu: 0.3, nu_min: 1e-3, prior: &prior };

    let calls = normalizer_calls();
    let mut atom = RegressionAtom::new(vec![0.0], vec![0.0]);
    let (mut sum_mu, mut sum_nu, mut acc_b, mut acc_c) = (0.0, 0.0, 0, 0);
    let (burn, keep) = (2_000, 20_000);
    for t in 0..burn + keep {
        let step = exchange_update_atom(&atom, &members, &cfg, &mut rng)?;
        atom = step.atom;
        if t >= burn {
            sum_mu += atom.b[0].exp();
            sum_nu += atom.c[0].exp();
            acc_b += usize::from(step.accepted_b);
            acc_c += usize::from(step.accepted_c);
        }
    }
    println!("true mu = 4.0, nu = 2.5");
    println!("posterior mean mu = {:.3}, nu = {:.3}", sum_mu / keep as f64, sum_nu / keep as f64);
    println!("acceptance: b {:.2}, c {:.2}", acc_b as f64 / keep as f64, acc_c as f64 / keep as f64);
    println!("normaliser evaluations during the chain: {}", normalizer_calls() - calls);
    Ok(())
}
