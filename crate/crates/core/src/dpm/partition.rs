use super::PosteriorDraws;

/// Fraction of subject pairs on which two partitions agree (both together
/// or both apart).
pub fn rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "partitions must cover the same subjects");
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let mut agree = 0u64;
    for i in 0..n {
        for j in i + 1..n {
            agree += u64::from((a[i] == a[j]) == (b[i] == b[j]));
        }
    }
    agree as f64 / (n * (n - 1) / 2) as f64
}

/// Posterior co-clustering probabilities, row-major `n x n`.
pub fn similarity_matrix(draws: &PosteriorDraws) -> Vec<f64> {
    let Some(first) = draws.snapshots.first() else {
        return Vec::new();
    };
    let n = first.labels.len();
    let mut sim = vec![0.0; n * n];
    for s in &draws.snapshots {
        for i in 0..n {
            for j in 0..n {
                if s.labels[i] == s.labels[j] {
                    sim[i * n + j] += 1.0;
                }
            }
        }
    }
    let m = draws.snapshots.len() as f64;
    sim.iter_mut().for_each(|v| *v /= m);
    sim
}

/// The sampled partition closest in squared error to the similarity
/// matrix (least-squares clustering). Empty when there are no snapshots.
pub fn least_squares_partition(draws: &PosteriorDraws) -> Vec<usize> {
    let sim = similarity_matrix(draws);
    let mut best: Option<(f64, &Vec<usize>)> = None;
    for s in &draws.snapshots {
        let n = s.labels.len();
        let mut loss = 0.0;
        for i in 0..n {
            for j in 0..n {
                let delta = f64::from(u8::from(s.labels[i] == s.labels[j]));
                loss += (delta - sim[i * n + j]).powi(2);
            }
        }
        if best.is_none_or(|(l, _)| loss < l) {
            best = Some((loss, &s.labels));
        }
    }
    best.map(|(_, l)| l.clone()).unwrap_or_default()
}
