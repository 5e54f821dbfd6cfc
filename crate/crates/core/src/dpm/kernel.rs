use crate::data::Dataset;

/// Normalised local weights `b_i` on the rows as given (no standardisation):
/// `b_ij ∝ gamma_j exp(-psi |x_i - x_j|^2)`.
pub fn local_weights(x: &[Vec<f64>], i: usize, psi: f64, gamma: &[f64]) -> Vec<f64> {
    assert!(i < x.len(), "subject {i} out of range");
    assert_eq!(gamma.len(), x.len(), "one location weight per subject");
    let log_w: Vec<f64> = x
        .iter()
        .zip(gamma)
        .map(|(xj, g)| g.ln() - psi * squared_distance(&x[i], xj))
        .collect();
    normalize_log(&log_w)
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// `exp(l - logsumexp(l))`.
pub(crate) fn normalize_log(log_w: &[f64]) -> Vec<f64> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Squared-exponential kernel between subjects on internally standardised
/// covariates. Constant columns (the intercept among them) are ignored.
#[derive(Debug, Clone)]
pub(crate) struct Kernel {
    n: usize,
    psi: f64,
    columns: Vec<usize>,
    means: Vec<f64>,
    sds: Vec<f64>,
    z: Vec<Vec<f64>>,
    log_k: Vec<f64>,
}

impl Kernel {
    pub fn new(data: &Dataset, psi: f64) -> Self {
        let n = data.n();
        let mut columns = Vec::new();
        let mut means = Vec::new();
        let mut sds = Vec::new();
        for col in 0..data.d() {
            let mean = data.rows().map(|r| r[col]).sum::<f64>() / n as f64;
            let var = data.rows().map(|r| (r[col] - mean).powi(2)).sum::<f64>() / n as f64;
            if var > 1e-24 * mean.abs().max(1.0) {
                columns.push(col);
                means.push(mean);
                sds.push(var.sqrt());
            }
        }
        let mut kernel = Self { n, psi, columns, means, sds, z: Vec::new(), log_k: Vec::new() };
        kernel.z = data.rows().map(|r| kernel.standardize(r)).collect();
        let mut log_k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..i {
                let v = -psi * squared_distance(&kernel.z[i], &kernel.z[j]);
                log_k[i * n + j] = v;
                log_k[j * n + i] = v;
            }
        }
        kernel.log_k = log_k;
        kernel
    }

    fn standardize(&self, row: &[f64]) -> Vec<f64> {
        self.columns.iter().zip(self.means.iter().zip(&self.sds)).map(|(&c, (m, s))| (row[c] - m) / s).collect()
    }

    pub fn psi(&self) -> f64 {
        self.psi
    }

    /// `log K(x_i, x_j)`.
    #[inline]
    pub fn log_k(&self, i: usize, j: usize) -> f64 {
        self.log_k[i * self.n + j]
    }

    pub fn log_k_row(&self, i: usize) -> &[f64] {
        &self.log_k[i * self.n..(i + 1) * self.n]
    }

    /// `log K(x, x_j)` for every training subject `j`.
    pub fn log_k_to(&self, x: &[f64]) -> Vec<f64> {
        let z = self.standardize(x);
        self.z.iter().map(|zj| -self.psi * squared_distance(&z, zj)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hand_computed_weights() {
        let x = vec![vec![0.0], vec![0.5], vec![1.0]];
        let w = local_weights(&x, 0, 1.0, &[1.0; 3]);
        let raw = [1.0, (-0.25f64).exp(), (-1.0f64).exp()];
        let total: f64 = raw.iter().sum();
        for (a, b) in w.iter().zip(raw) {
            assert_abs_diff_eq!(*a, b / total, epsilon = 1e-15);
        }
    }

    #[test]
    fn distance_free_limits() {
        let x = vec![vec![1.0, 0.0], vec![1.0, 3.0], vec![1.0, -2.0], vec![1.0, 7.0]];
        for w in local_weights(&x, 2, 0.0, &[1.0; 4]) {
            assert_abs_diff_eq!(w, 0.25, epsilon = 1e-15);
        }
        let same = vec![vec![1.0, 2.0]; 5];
        for w in local_weights(&same, 1, 40.0, &[1.0; 5]) {
            assert_abs_diff_eq!(w, 0.2, epsilon = 1e-15);
        }
    }

    #[test]
    fn kernel_standardizes_and_skips_constant_columns() {
        let data = Dataset::with_intercept(vec![0, 1, 2], &[vec![10.0], vec![20.0], vec![30.0]]).unwrap();
        let k = Kernel::new(&data, 1.0);
        // sd of (10, 20, 30) is sqrt(200/3); standardised gap between ends is 2 * sqrt(1.5)
        assert_abs_diff_eq!(k.log_k(0, 2), -6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(k.log_k(1, 1), 0.0);
        assert_abs_diff_eq!(k.log_k_to(&[1.0, 20.0])[0], -1.5, epsilon = 1e-12);
    }
}
