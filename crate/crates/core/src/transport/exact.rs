use crate::error::{Error, Result};
use crate::numkit::DenseMatrix;

/// Largest problem [`exact_ot`] will enumerate (8! = 40 320 permutations).
pub const EXACT_OT_MAX_POINTS: usize = 8;

/// Exact OT between two uniform measures of equal size `N ≤ 8`.
///
/// With uniform equal marginals an optimal plan is a permutation, so the
/// minimum of `(1/N)·Σ_i C[i][σ(i)]` over all `N!` permutations is the
/// unregularised optimum. Returns that cost and the minimising `σ`
/// (first found in Heap's-algorithm order on ties).
pub fn exact_ot(cost: &DenseMatrix) -> Result<(f64, Vec<usize>)> {
    let (n, m) = cost.shape();
    if n != m {
        return Err(Error::contract(format!("exact OT needs a square cost, got {n}x{m}")));
    }
    if n == 0 {
        return Err(Error::contract("exact OT needs at least one point"));
    }
    if n > EXACT_OT_MAX_POINTS {
        return Err(Error::contract(format!(
            "exact OT enumerates permutations; refusing N = {n} > {EXACT_OT_MAX_POINTS}"
        )));
    }
    let total = |p: &[usize]| -> f64 { p.iter().enumerate().map(|(i, &j)| cost.get(i, j)).sum() };

    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = perm.clone();
    let mut best_cost = total(&perm);
    // Iterative Heap's algorithm.
    let mut c = vec![0usize; n];
    let mut i = 1;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            let t = total(&perm);
            if t < best_cost {
                best_cost = t;
                best.copy_from_slice(&perm);
            }
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok((best_cost / n as f64, best))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_optimal_for_zero_diagonal() {
        let c = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(exact_ot(&c).unwrap(), (0.0, vec![0, 1]));
    }

    #[test]
    fn anti_diagonal_case() {
        let c = DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        assert_eq!(exact_ot(&c).unwrap(), (1.0, vec![1, 0]));
    }

    #[test]
    fn guards() {
        assert!(exact_ot(&DenseMatrix::zeros(9, 9)).is_err());
        assert!(exact_ot(&DenseMatrix::zeros(2, 3)).is_err());
        assert!(exact_ot(&DenseMatrix::zeros(0, 0)).is_err());
    }
}
