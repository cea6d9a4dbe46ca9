//! Dynamic time warping between action chunks and DTW-based pseudo-pairing.
//!
//! Local cost is the squared Euclidean distance between steps. Admissible
//! paths start at `(0, 0)`, end at `(T-1, T-1)` and move by `(1,0)`, `(0,1)`
//! or `(1,1)`. No warping band is applied.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ChunkedAction;
use crate::numkit::DenseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct DtwResult {
    pub cost: f64,
    /// Zero-based `(i, j)` pairs from `(0, 0)` to `(T-1, T-1)`.
    pub path: Vec<(usize, usize)>,
}

fn check_comparable(a: &ChunkedAction, b: &ChunkedAction) -> Result<()> {
    if a.horizon() != b.horizon() {
        return Err(Error::contract(format!(
            "DTW horizons differ: {} vs {}",
            a.horizon(),
            b.horizon()
        )));
    }
    if a.dim() != b.dim() {
        return Err(Error::contract(format!("DTW dims differ: {} vs {}", a.dim(), b.dim())));
    }
    if a.is_normalized() != b.is_normalized() {
        return Err(Error::contract("DTW between a normalized and a raw chunk"));
    }
    Ok(())
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Fills the accumulated-cost table `acc[i][j]` (row-major, `n x n`).
fn accumulate(a: &ChunkedAction, b: &ChunkedAction) -> Vec<f64> {
    let n = a.horizon();
    let mut acc = vec![0.0_f64; n * n];
    for i in 0..n {
        for j in 0..n {
            let local = sq_dist(a.step(i), b.step(j));
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => acc[j - 1],
                (_, 0) => acc[(i - 1) * n],
                _ => acc[(i - 1) * n + j - 1]
                    .min(acc[(i - 1) * n + j])
                    .min(acc[i * n + j - 1]),
            };
            acc[i * n + j] = local + best;
        }
    }
    acc
}

/// DTW cost and an optimal warping path.
pub fn dtw_distance(a: &ChunkedAction, b: &ChunkedAction) -> Result<DtwResult> {
    check_comparable(a, b)?;
    let n = a.horizon();
    let acc = accumulate(a, b);
    let cost = acc[n * n - 1];

    // Backtrack; prefer the diagonal, then i-1, then j-1 on ties.
    let mut path = vec![(n - 1, n - 1)];
    let (mut i, mut j) = (n - 1, n - 1);
    while i > 0 || j > 0 {
        (i, j) = if i == 0 {
            (0, j - 1)
        } else if j == 0 {
            (i - 1, 0)
        } else {
            let diag = acc[(i - 1) * n + j - 1];
            let up = acc[(i - 1) * n + j];
            let left = acc[i * n + j - 1];
            if diag <= up && diag <= left {
                (i - 1, j - 1)
            } else if up <= left {
                (i - 1, j)
            } else {
                (i, j - 1)
            }
        };
        path.push((i, j));
    }
    path.reverse();
    Ok(DtwResult { cost, path })
}

/// DTW cost only, with O(T) memory.
pub fn dtw_cost(a: &ChunkedAction, b: &ChunkedAction) -> Result<f64> {
    check_comparable(a, b)?;
    Ok(dtw_cost_unchecked(a, b))
}

fn dtw_cost_unchecked(a: &ChunkedAction, b: &ChunkedAction) -> f64 {
    let n = a.horizon();
    let mut prev = vec![0.0_f64; n];
    let mut cur = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let local = sq_dist(a.step(i), b.step(j));
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => cur[j - 1],
                (_, 0) => prev[0],
                _ => prev[j - 1].min(prev[j]).min(cur[j - 1]),
            };
            cur[j] = local + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[n - 1]
}

/// `A[i][j] = DTW(source[i], target[j])`.
pub fn dtw_cost_matrix(source: &[ChunkedAction], target: &[ChunkedAction]) -> Result<DenseMatrix> {
    pairwise(source, target, dtw_cost_unchecked)
}

/// `A[i][j] = Σ_t ‖source[i]_t − target[j]_t‖² / T`: step-aligned
/// squared error, the pairing cost of the MSE ablation.
pub fn pointwise_cost_matrix(source: &[ChunkedAction], target: &[ChunkedAction]) -> Result<DenseMatrix> {
    pairwise(source, target, |a, b| {
        let t = a.horizon();
        (0..t).map(|k| sq_dist(a.step(k), b.step(k))).sum::<f64>() / t as f64
    })
}

fn pairwise(
    source: &[ChunkedAction],
    target: &[ChunkedAction],
    f: impl Fn(&ChunkedAction, &ChunkedAction) -> f64,
) -> Result<DenseMatrix> {
    if let Some(first) = source.first().or(target.first()) {
        for c in source.iter().chain(target) {
            check_comparable(first, c)?;
        }
    }
    let mut out = DenseMatrix::zeros(source.len(), target.len());
    for (i, a) in source.iter().enumerate() {
        for (j, b) in target.iter().enumerate() {
            out.set(i, j, f(a, b));
        }
    }
    Ok(out)
}

/// For every target sample `j`, the source sample `i*(j)` with the smallest
/// behavioural cost `A[i][j]` (ties go to the lowest `i`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoPairAssignment {
    pub pair_index: Vec<usize>,
    pub costs: DenseMatrix,
}

impl PseudoPairAssignment {
    pub fn is_paired(&self, i: usize, j: usize) -> bool {
        self.pair_index[j] == i
    }

    /// Identity pairing `i*(j) = j` over a square batch with a zero cost table.
    pub fn identity(n: usize) -> Self {
        Self {
            pair_index: (0..n).collect(),
            costs: DenseMatrix::zeros(n, n),
        }
    }
}

pub fn pseudo_pairs(costs: &DenseMatrix) -> Result<PseudoPairAssignment> {
    if costs.is_empty() {
        return Err(Error::contract("pseudo-pairing needs a non-empty cost matrix"));
    }
    if !costs.all_finite() {
        return Err(Error::NonFinite("pseudo-pair cost matrix".into()));
    }
    let pair_index = (0..costs.cols())
        .map(|j| {
            let mut best = 0;
            for i in 1..costs.rows() {
                if costs.get(i, j) < costs.get(best, j) {
                    best = i;
                }
            }
            best
        })
        .collect();
    Ok(PseudoPairAssignment {
        pair_index,
        costs: costs.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_chunk(v: &[f64]) -> ChunkedAction {
        ChunkedAction::from_points(&v.iter().map(|&x| vec![x]).collect::<Vec<_>>(), true).unwrap()
    }

    #[test]
    fn identical_chunks_cost_zero_on_diagonal() {
        let a = scalar_chunk(&[0.0, 1.0, 3.0, 2.0]);
        let r = dtw_distance(&a, &a).unwrap();
        assert_eq!(r.cost, 0.0);
        assert_eq!(r.path, vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
    }

    #[test]
    fn small_scalar_example() {
        // Enumerating the 5 admissible 3x3 paths by hand gives a minimum of 1.
        let r = dtw_distance(&scalar_chunk(&[0.0, 1.0, 2.0]), &scalar_chunk(&[0.0, 2.0, 2.0])).unwrap();
        assert_eq!(r.cost, 1.0);
        let along: f64 = r
            .path
            .iter()
            .map(|&(i, j)| ([0.0_f64, 1.0, 2.0][i] - [0.0, 2.0, 2.0][j]).powi(2))
            .sum();
        assert_eq!(along, r.cost);
    }

    #[test]
    fn mismatches_are_contract_errors() {
        let a = scalar_chunk(&[0.0, 1.0]);
        let b = scalar_chunk(&[0.0, 1.0, 2.0]);
        assert!(matches!(dtw_distance(&a, &b), Err(Error::Contract(_))));
        let c = ChunkedAction::from_points(&[vec![0.0, 0.0], vec![1.0, 1.0]], true).unwrap();
        assert!(matches!(dtw_distance(&a, &c), Err(Error::Contract(_))));
        let raw = ChunkedAction::from_points(&[vec![0.0], vec![1.0]], false).unwrap();
        assert!(dtw_cost(&a, &raw).is_err());
    }

    #[test]
    fn pairing_prefers_lowest_index_on_ties() {
        let p = pseudo_pairs(&DenseMatrix::filled(3, 4, 2.0)).unwrap();
        assert_eq!(p.pair_index, vec![0; 4]);
        let mut a = DenseMatrix::filled(3, 3, 1.0);
        for i in 0..3 {
            a.set(i, i, 0.0);
        }
        assert_eq!(pseudo_pairs(&a).unwrap().pair_index, vec![0, 1, 2]);
        assert!(pseudo_pairs(&DenseMatrix::zeros(0, 0)).is_err());
    }

    #[test]
    fn batch_of_one_matches_single_call() {
        let a = scalar_chunk(&[0.1, 0.5, -0.2]);
        let b = scalar_chunk(&[0.0, 0.4, 0.3]);
        let m = dtw_cost_matrix(&[a.clone()], &[b.clone()]).unwrap();
        assert_eq!(m.shape(), (1, 1));
        assert_eq!(m.get(0, 0), dtw_distance(&a, &b).unwrap().cost);
    }
}
