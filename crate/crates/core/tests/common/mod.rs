//! Independent reference implementations shared by the integration tests.
//!
//! None of these call into the code they check: each oracle recomputes its
//! quantity the slow, obvious way.

#![allow(dead_code)]

use xdomain_core::geometry::ChunkedAction;
use xdomain_core::numkit::{DenseMatrix, SeededRng, Stream};

pub fn rng(tag: u64) -> SeededRng {
    SeededRng::new(0x5eed, Stream::Custom(1000 + tag))
}

pub fn random_matrix(rng: &mut SeededRng, rows: usize, cols: usize, scale: f64) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.range(-scale, scale))
}

pub fn random_chunk(rng: &mut SeededRng, horizon: usize, dim: usize) -> ChunkedAction {
    ChunkedAction::new(random_matrix(rng, horizon, dim, 1.0), true).unwrap()
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Minimum over every admissible warping path, found by exhaustive
/// recursion. The running sum is accumulated from the start of the path.
pub fn dtw_brute_force(a: &ChunkedAction, b: &ChunkedAction) -> f64 {
    let n = a.horizon();
    fn walk(a: &ChunkedAction, b: &ChunkedAction, i: usize, j: usize, acc: f64, best: &mut f64) {
        let n = a.horizon();
        let acc = acc + sq(a.step(i), b.step(j));
        if i == n - 1 && j == n - 1 {
            *best = best.min(acc);
            return;
        }
        if i + 1 < n {
            walk(a, b, i + 1, j, acc, best);
        }
        if j + 1 < n {
            walk(a, b, i, j + 1, acc, best);
        }
        if i + 1 < n && j + 1 < n {
            walk(a, b, i + 1, j + 1, acc, best);
        }
    }
    let mut best = f64::INFINITY;
    if n > 0 {
        walk(a, b, 0, 0, 0.0, &mut best);
    }
    best
}

pub fn pointwise_sq(a: &ChunkedAction, b: &ChunkedAction) -> f64 {
    (0..a.horizon()).map(|t| sq(a.step(t), b.step(t))).sum()
}

/// Optimal assignment value `min_σ Σ_i C[i][σ(i)]` by dynamic programming
/// over subsets of assigned columns.
pub fn assignment_dp(cost: &DenseMatrix) -> f64 {
    let n = cost.rows();
    let mut best = vec![f64::INFINITY; 1 << n];
    best[0] = 0.0;
    for mask in 0..(1usize << n) {
        if best[mask].is_infinite() {
            continue;
        }
        let row = mask.count_ones() as usize;
        if row == n {
            continue;
        }
        for col in 0..n {
            if mask & (1 << col) == 0 {
                let next = mask | (1 << col);
                best[next] = best[next].min(best[mask] + cost.get(row, col));
            }
        }
    }
    best[(1 << n) - 1]
}

/// Biased squared MMD with an RBF kernel as a literal triple of double sums.
pub fn mmd_naive(x: &DenseMatrix, y: &DenseMatrix, sigma: f64) -> f64 {
    let k = |a: &[f64], b: &[f64]| (-sq(a, b) / (2.0 * sigma * sigma)).exp();
    let mean = |p: &DenseMatrix, q: &DenseMatrix| {
        let mut s = 0.0;
        for i in 0..p.rows() {
            for j in 0..q.rows() {
                s += k(p.row(i), q.row(j));
            }
        }
        s / (p.rows() * q.rows()) as f64
    };
    mean(x, x) + mean(y, y) - 2.0 * mean(x, y)
}

/// Entropic OT objective `⟨T, C⟩ + ε·KL(T ‖ μ⊗ν)` evaluated at a plan. At
/// the Sinkhorn fixed point its derivative w.r.t. `C` is exactly `T`, which
/// is what a detached-plan gradient computes.
pub fn entropic_objective(plan: &DenseMatrix, cost: &DenseMatrix, epsilon: f64) -> f64 {
    let (n, m) = plan.shape();
    let prior = 1.0 / (n * m) as f64;
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..m {
            let t = plan.get(i, j);
            total += t * cost.get(i, j);
            if t > 0.0 {
                total += epsilon * t * (t / prior).ln();
            }
        }
    }
    total
}

/// Relative error with a small absolute floor so that coordinates whose
/// true gradient is zero are judged on absolute error.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Largest [`rel_err`] over coordinates of a central-difference check of
/// `f` at `x`. `coords` selects which coordinates to probe.
pub fn fd_check(
    x: &DenseMatrix,
    analytic: &DenseMatrix,
    coords: &[usize],
    h: f64,
    mut f: impl FnMut(&DenseMatrix) -> f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    for &k in coords {
        let mut plus = x.clone();
        plus.data_mut()[k] += h;
        let mut minus = x.clone();
        minus.data_mut()[k] -= h;
        let numeric = (f(&plus) - f(&minus)) / (2.0 * h);
        worst = worst.max(rel_err(analytic.data()[k], numeric));
    }
    worst
}

pub fn all_coords(m: &DenseMatrix) -> Vec<usize> {
    (0..m.len()).collect()
}

pub mod gradsuite;
