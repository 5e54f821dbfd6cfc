//! Exact minimisation of the empirical check loss `sum_i rho_p(y_i - x_i'b)`.
//!
//! The minimum is attained at a vertex: `d` observations fitted exactly.
//! From a vertex with basis rows `B`, moving along `delta_k = X_B^{-1} e_k`
//! frees row `k` while the other basis rows keep zero residual. The loss is
//! piecewise linear along each such edge, so the steepest descending edge is
//! followed to the breakpoint where its slope turns non-negative (a weighted
//! median), where the crossing row enters the basis. A vertex where no edge
//! descends is optimal.
//!
//! Ties among residuals would make vertices degenerate; for `d >= 2` the
//! targets are nudged by a tiny deterministic amount during the search and
//! the final coefficients are recomputed from the original targets.

use crate::error::{Error, Result};

/// `rho_p(r)`: `p r` for `r >= 0`, `(p - 1) r` otherwise.
pub fn check_loss(r: f64, p: f64) -> f64 {
    if r >= 0.0 {
        p * r
    } else {
        (p - 1.0) * r
    }
}

/// Sum of check losses of `y - X b` (`x` row-major, `d` columns).
pub fn objective(y: &[f64], x: &[f64], d: usize, beta: &[f64], p: f64) -> f64 {
    y.iter().enumerate().map(|(i, yi)| check_loss(yi - dot(&x[i * d..(i + 1) * d], beta), p)).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// Solution of one check-loss problem.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckLossFit {
    pub beta: Vec<f64>,
    /// Rows fitted exactly; reusable as a warm start.
    pub basis: Vec<usize>,
    pub objective: f64,
}

/// Minimises the check loss of `y` on the row-major `n x d` design `x`.
/// `warm_start` is a set of `d` rows to start from; it is ignored if those
/// rows are not linearly independent.
pub fn fit_quantile_regression(
    y: &[f64],
    x: &[f64],
    d: usize,
    p: f64,
    warm_start: Option<&[usize]>,
) -> Result<CheckLossFit> {
    let n = y.len();
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!("quantile level must lie in (0, 1), got {p}")));
    }
    if d == 0 || x.len() != n * d {
        return Err(Error::LengthMismatch { expected: n * d, found: x.len() });
    }
    if n < d {
        return Err(Error::RankDeficient);
    }
    if y.iter().chain(x).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite value in check-loss problem".into()));
    }
    let row = |i: usize| &x[i * d..(i + 1) * d];

    let scale = 1.0 + y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let target: Vec<f64> = if d == 1 {
        y.to_vec()
    } else {
        y.iter().enumerate().map(|(i, v)| v + 1e-9 * scale * nudge(i)).collect()
    };

    let mut basis = match warm_start.filter(|b| b.len() == d && b.iter().all(|&i| i < n)) {
        Some(b) if invert(x, d, b).is_some() => b.to_vec(),
        _ => initial_basis(&target, x, d)?,
    };

    let tol = 1e-12 * scale;
    let max_pivots = 50 * n + 1000;
    for _ in 0..max_pivots {
        let inv = invert(x, d, &basis).ok_or(Error::RankDeficient)?;
        let beta = solve_with(&inv, d, &basis, &target);
        let resid: Vec<f64> = (0..n).map(|i| target[i] - dot(row(i), &beta)).collect();
        let in_basis = {
            let mut mask = vec![false; n];
            basis.iter().for_each(|&i| mask[i] = true);
            mask
        };

        // delta_k is column k of the inverse; s_ik = x_i' delta_k
        let mut best: Option<(f64, usize, f64)> = None; // (slope, k, sign)
        let mut s_cols = vec![vec![0.0; n]; d];
        for k in 0..d {
            let delta: Vec<f64> = (0..d).map(|r| inv[r * d + k]).collect();
            let delta_norm = dot(&delta, &delta).sqrt();
            let s = &mut s_cols[k];
            for i in 0..n {
                if !in_basis[i] {
                    let v = dot(row(i), &delta);
                    // rounding noise on a structural zero would pivot into a singular basis
                    let noise = 1e-10 * delta_norm * dot(row(i), row(i)).sqrt();
                    s[i] = if v.abs() <= noise { 0.0 } else { v };
                }
            }
            for sign in [1.0, -1.0] {
                // freeing row k: its residual becomes -t * sign
                let mut slope = check_loss(-sign, p);
                for i in 0..n {
                    if in_basis[i] {
                        continue;
                    }
                    let si = sign * s[i];
                    slope += if resid[i] > 0.0 {
                        -si * p
                    } else if resid[i] < 0.0 {
                        si * (1.0 - p)
                    } else {
                        check_loss(-si, p)
                    };
                }
                if slope < -tol && best.is_none_or(|(b, _, _)| slope < b) {
                    best = Some((slope, k, sign));
                }
            }
        }
        let Some((slope, k, sign)) = best else {
            let beta = if d == 1 { beta } else { solve_with(&inv, d, &basis, y) };
            let objective = objective(y, x, d, &beta, p);
            return Ok(CheckLossFit { beta, basis, objective });
        };

        // breakpoints t_i = r_i / s_i > 0 along the chosen edge
        let mut breaks: Vec<(f64, usize, f64)> = (0..n)
            .filter(|&i| !in_basis[i])
            .filter_map(|i| {
                let si = sign * s_cols[k][i];
                if si == 0.0 {
                    return None;
                }
                let t = resid[i] / si;
                (t > 0.0).then_some((t, i, si.abs()))
            })
            .collect();
        breaks.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut g = slope;
        let mut entering = None;
        for &(_, i, w) in &breaks {
            g += w;
            if g >= -tol {
                entering = Some(i);
                break;
            }
        }
        let entering = entering.ok_or_else(|| Error::InconsistentState("check loss unbounded below".into()))?;
        basis[k] = entering;
    }
    Err(Error::InconsistentState(format!("check-loss solver exceeded {max_pivots} pivots")))
}

/// Deterministic value in `(0, 1)` per row.
fn nudge(i: usize) -> f64 {
    let mut z = (i as u64).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    ((z >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

/// Greedy basis: rows in order of increasing target, skipping dependent ones.
/// Stricter independence thresholds are tried first so that nearly singular
/// sets (common with sparse spline rows) are avoided when possible.
fn initial_basis(target: &[f64], x: &[f64], d: usize) -> Result<Vec<usize>> {
    let mut order: Vec<usize> = (0..target.len()).collect();
    order.sort_by(|&a, &b| target[a].total_cmp(&target[b]).then(a.cmp(&b)));
    for threshold in [1e-3, 1e-5, 1e-8] {
        if let Some(basis) = greedy_basis(&order, x, d, threshold) {
            if invert(x, d, &basis).is_some() {
                return Ok(basis);
            }
        }
    }
    Err(Error::RankDeficient)
}

fn greedy_basis(order: &[usize], x: &[f64], d: usize, threshold: f64) -> Option<Vec<usize>> {
    // Gram-Schmidt on accepted rows
    let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(d);
    let mut basis = Vec::with_capacity(d);
    for &i in order {
        let mut v = x[i * d..(i + 1) * d].to_vec();
        let norm0 = dot(&v, &v).sqrt();
        if norm0 == 0.0 {
            continue;
        }
        // two passes keep the residual honest when rows are nearly dependent
        for _ in 0..2 {
            for q in &ortho {
                let c = dot(&v, q);
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > threshold * norm0 {
            v.iter_mut().for_each(|a| *a /= norm);
            ortho.push(v);
            basis.push(i);
            if basis.len() == d {
                return Some(basis);
            }
        }
    }
    None
}

/// Inverse of the `d x d` matrix of basis rows, row-major, by Gauss-Jordan
/// elimination with partial pivoting.
fn invert(x: &[f64], d: usize, basis: &[usize]) -> Option<Vec<f64>> {
    let mut a: Vec<f64> = basis.iter().flat_map(|&i| x[i * d..(i + 1) * d].iter().copied()).collect();
    let mut inv = vec![0.0; d * d];
    for i in 0..d {
        inv[i * d + i] = 1.0;
    }
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for col in 0..d {
        let piv = (col..d).max_by(|&r, &s| a[r * d + col].abs().total_cmp(&a[s * d + col].abs()))?;
        if a[piv * d + col].abs() <= 1e-12 * scale {
            return None;
        }
        if piv != col {
            for c in 0..d {
                a.swap(piv * d + c, col * d + c);
                inv.swap(piv * d + c, col * d + c);
            }
        }
        let diag = a[col * d + col];
        for c in 0..d {
            a[col * d + c] /= diag;
            inv[col * d + c] /= diag;
        }
        for r in 0..d {
            if r != col {
                let f = a[r * d + col];
                if f != 0.0 {
                    for c in 0..d {
                        a[r * d + c] -= f * a[col * d + c];
                        inv[r * d + c] -= f * inv[col * d + c];
                    }
                }
            }
        }
    }
    Some(inv)
}

fn solve_with(inv: &[f64], d: usize, basis: &[usize], y: &[f64]) -> Vec<f64> {
    (0..d).map(|r| (0..d).map(|c| inv[r * d + c] * y[basis[c]]).sum()).collect()
}
