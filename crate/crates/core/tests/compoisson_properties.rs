use count_dpm::compoisson::{cdf, log_normalizer, log_pmf, moments_exact, quantile, ComPoisson};
use count_dpm::exchange::exchange_log_ratio;
use count_dpm::{ComPoissonParams, NormalizerConfig};
use proptest::prelude::*;
use statrs::function::factorial::ln_factorial;

fn params() -> impl Strategy<Value = ComPoissonParams> {
    (0.05f64..40.0, 0.2f64..5.0).prop_map(|(mu, nu)| ComPoissonParams::new(mu, nu).unwrap())
}

/// Direct summation with a running maximum, no shortcuts.
fn brute_log_z(mu: f64, nu: f64) -> f64 {
    let terms: Vec<f64> = (0..3000u64).map(|j| nu * (j as f64 * mu.ln() - ln_factorial(j))).collect();
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn pmf_sums_to_one(p in params()) {
        let dist = ComPoisson::new(p, &NormalizerConfig::default()).unwrap();
        let total: f64 = (0..5000).map(|y| dist.pmf(y)).sum();
        prop_assert!((total - 1.0).abs() < 1e-8, "total {total}");
    }

    #[test]
    fn normalizer_matches_brute_force(p in params()) {
        let fast = log_normalizer(p, &NormalizerConfig::default()).unwrap();
        let slow = brute_log_z(p.mu(), p.nu());
        prop_assert!((fast - slow).abs() < 1e-9 * slow.abs().max(1.0), "{fast} vs {slow}");
    }

    #[test]
    fn poisson_case_is_exact(mu in 0.01f64..60.0, y in 0u64..150) {
        let p = ComPoissonParams::new(mu, 1.0).unwrap();
        let got = log_pmf(y, p, &NormalizerConfig::default()).unwrap().exp();
        let want = (-mu + y as f64 * mu.ln() - ln_factorial(y)).exp();
        prop_assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn quantile_inverts_cdf(p in params(), level in 0.001f64..0.999) {
        let cfg = NormalizerConfig::default();
        let q = quantile(level, p, &cfg).unwrap();
        prop_assert!(cdf(q, p, &cfg).unwrap() >= level - 1e-12);
        if q > 0 {
            prop_assert!(cdf(q - 1, p, &cfg).unwrap() < level);
        }
    }

    #[test]
    fn variance_falls_as_nu_rises(mu in 0.1f64..30.0, nu in 0.2f64..4.0, bump in 0.05f64..1.0) {
        let cfg = NormalizerConfig::default();
        let (_, v1) = moments_exact(ComPoissonParams::new(mu, nu).unwrap(), &cfg).unwrap();
        let (_, v2) = moments_exact(ComPoissonParams::new(mu, nu + bump).unwrap(), &cfg).unwrap();
        prop_assert!(v2 < v1, "{v2} !< {v1}");
    }

    #[test]
    fn mode_is_floor_of_mu(p in params()) {
        let dist = ComPoisson::new(p, &NormalizerConfig::default()).unwrap();
        let best = (0..200).max_by(|&a, &b| dist.pmf(a).total_cmp(&dist.pmf(b))).unwrap();
        let m = p.mu().floor() as u64;
        // integral mu ties mu - 1 and mu
        prop_assert!(best == m || (best + 1 == m && (dist.pmf(best) - dist.pmf(m)).abs() < 1e-12 * dist.pmf(m)));
    }

    /// The exchange ratio equals the normalised likelihood ratio of the data
    /// minus that of the auxiliary draw.
    #[test]
    fn exchange_ratio_cancels_normalizers(
        a in params(), b in params(), y in 0u64..60, aux in 0u64..60,
    ) {
        let cfg = NormalizerConfig::default();
        let lp = |v, t| log_pmf(v, t, &cfg).unwrap();
        let want = (lp(y, b) - lp(y, a)) - (lp(aux, b) - lp(aux, a));
        let got = exchange_log_ratio(&[y], &[a], &[b], &[aux]).unwrap();
        prop_assert!((got - want).abs() < 1e-7 * want.abs().max(1.0), "{got} vs {want}");
        let back = exchange_log_ratio(&[y], &[b], &[a], &[aux]).unwrap();
        prop_assert!((got + back).abs() < 1e-9 * got.abs().max(1.0));
    }
}
