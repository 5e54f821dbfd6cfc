use count_dpm::jitter::{
    count_from_continuous, detect_crossing, fit_jittered, fit_quantile_regression, jitter, objective, transform, Basis,
    BasisKind, CubicBSpline, JitterConfig, QuantileFit,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Minimum over every basic solution: the coefficient vectors that fit `d`
/// of the rows exactly.
fn exhaustive_min(y: &[f64], x: &[f64], d: usize, p: f64) -> f64 {
    let n = y.len();
    let mut best = f64::INFINITY;
    if d == 1 {
        for i in 0..n {
            best = best.min(objective(y, x, 1, &[y[i] / x[i]], p));
        }
        return best;
    }
    for i in 0..n {
        for j in i + 1..n {
            let (a, b, c, e) = (x[2 * i], x[2 * i + 1], x[2 * j], x[2 * j + 1]);
            let det = a * e - b * c;
            if det.abs() > 1e-12 {
                let beta = [(e * y[i] - b * y[j]) / det, (a * y[j] - c * y[i]) / det];
                best = best.min(objective(y, x, 2, &beta, p));
            }
        }
    }
    best
}

fn problem() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, usize, f64)> {
    (2usize..=8, 1usize..=2, 0.02f64..0.98).prop_flat_map(|(n, d, p)| {
        let y = prop::collection::vec(prop_oneof![(-4i32..4).prop_map(f64::from), -4.0f64..4.0], n);
        let x = prop::collection::vec(prop_oneof![(-2i32..3).prop_map(f64::from), -2.0f64..2.0], n);
        (y, x).prop_map(move |(y, x)| {
            let design = if d == 1 { vec![1.0; n] } else { x.iter().flat_map(|v| [1.0, *v]).collect() };
            (y, design, d, p)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn solver_matches_exhaustive_oracle((y, x, d, p) in problem()) {
        match fit_quantile_regression(&y, &x, d, p, None) {
            Ok(fit) => {
                let oracle = exhaustive_min(&y, &x, d, p);
                prop_assert!((fit.objective - oracle).abs() < 1e-9, "{} vs {oracle}", fit.objective);
                prop_assert!((objective(&y, &x, d, &fit.beta, p) - fit.objective).abs() < 1e-12);
            }
            Err(count_dpm::Error::RankDeficient) => {
                // only when every covariate value coincides
                prop_assert!(d == 2 && x.chunks(2).all(|r| r[1] == x[1]));
            }
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn warm_start_does_not_change_the_optimum((y, x, d, p) in problem(), a in 0usize..8, b in 0usize..8) {
        let n = y.len();
        let warm: Vec<usize> = if d == 1 { vec![a % n] } else { vec![a % n, b % n] };
        if let (Ok(cold), Ok(hot)) = (fit_quantile_regression(&y, &x, d, p, None), fit_quantile_regression(&y, &x, d, p, Some(&warm))) {
            prop_assert!((cold.objective - hot.objective).abs() < 1e-9);
        }
    }

    #[test]
    fn transform_is_monotone(z1 in 0.0f64..50.0, dz in 0.0f64..10.0, p in 0.01f64..0.99) {
        prop_assert!(transform(z1, p, 1e-5) <= transform(z1 + dz, p, 1e-5));
        prop_assert!(count_from_continuous(z1) <= count_from_continuous(z1 + dz));
    }

    #[test]
    fn jitter_keeps_integer_part(y in prop::collection::vec(0u64..1000, 1..50), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = jitter(&y, &mut rng);
        prop_assert!(z.iter().zip(&y).all(|(z, &y)| z.floor() as u64 == y && *z >= y as f64));
    }

    #[test]
    fn spline_is_a_partition_of_unity(
        cuts in prop::collection::vec(0.01f64..0.99, 3),
        x in -0.5f64..1.5,
    ) {
        let mut cuts = cuts;
        cuts.sort_by(f64::total_cmp);
        prop_assume!(cuts.windows(2).all(|w| w[1] - w[0] > 1e-6));
        let s = CubicBSpline::new(0.0, 1.0, &cuts).unwrap();
        let v = s.eval(x);
        prop_assert_eq!(v.len(), 7);
        prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(v.iter().all(|b| *b >= -1e-15));
    }
}

#[test]
fn jittered_median_of_a_constant_line() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cov: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 / 40.0]).collect();
    let y: Vec<u64> = (0..40).map(|i| 2 + (i % 3)).collect();
    let fit = fit_jittered(&y, &cov, 0.5, BasisKind::Linear, &JitterConfig { m_jitter: 30, ..Default::default() }, &mut rng)
        .unwrap();
    let q = count_dpm::jitter::estimate_count_quantile(&[0.5], &fit);
    assert_eq!(q, 3);
}

#[test]
fn crossing_report_lists_each_violation() {
    let lo = QuantileFit { p: 0.1, beta: vec![1.0, 2.0], basis: Basis::Linear, m_jitter: 1 };
    let hi = QuantileFit { p: 0.9, beta: vec![1.5, 0.0], basis: Basis::Linear, m_jitter: 1 };
    // exp(1 + 2x) passes exp(1.5) at x = 0.25
    let grid: Vec<Vec<f64>> = [0.0, 0.2, 0.6, 1.0].iter().map(|&x| vec![x]).collect();
    let found = detect_crossing(&[lo, hi], &grid);
    let xs: Vec<f64> = found.iter().map(|c| c.x[0]).collect();
    assert_eq!(xs, vec![0.6, 1.0]);
    assert!(found.iter().all(|c| c.p_low == 0.1 && c.p_high == 0.9));
}
