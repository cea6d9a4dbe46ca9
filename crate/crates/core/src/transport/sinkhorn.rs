use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::DenseMatrix;

/// Iteration controls for [`sinkhorn`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinkhornOptions {
    pub max_iters: usize,
    /// Stop once the largest marginal violation (L∞) is at most this.
    pub tol: f64,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            tol: 1e-6,
        }
    }
}

/// Entropic regularisation strength for a blur length scale on squared costs.
pub fn epsilon_from_blur(blur: f64) -> f64 {
    blur * blur
}

/// Entropic coupling returned by [`sinkhorn`].
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub matrix: DenseMatrix,
    pub epsilon: f64,
    pub iterations_used: usize,
    /// Largest absolute deviation of a row or column sum from its marginal.
    pub marginal_residual: f64,
    pub converged: bool,
}

impl TransportPlan {
    /// `Σ_ij T_ij C_ij`.
    pub fn transport_cost(&self, cost: &DenseMatrix) -> Result<f64> {
        Ok(self.matrix.hadamard(cost)?.sum())
    }
}

/// Uniform probability weights over `n` points.
pub fn uniform_weights(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

fn check_weights(name: &str, w: &[f64], expected_len: usize) -> Result<()> {
    if w.len() != expected_len {
        return Err(Error::shape(format!(
            "{name} has {} weights for {expected_len} points",
            w.len()
        )));
    }
    if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::contract(format!(
            "{name} weights must be finite and nonnegative"
        )));
    }
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::contract(format!("{name} weights sum to {total}, not 1")));
    }
    Ok(())
}

/// `-ε·log Σ_k exp(x_k)` over `scratch`, ignoring `-inf` terms.
fn neg_eps_lse(scratch: &[f64], epsilon: f64) -> f64 {
    let m = scratch.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::INFINITY;
    }
    let s: f64 = scratch.iter().map(|&x| (x - m).exp()).sum();
    -epsilon * (m + s.ln())
}

/// Log-domain Sinkhorn iterations for entropic OT between `mu_source`
/// (rows of `cost`) and `mu_target` (columns).
///
/// The plan has the form `T_ij = exp((f_i + g_j − C_ij)/ε)·μ_i·ν_j`. Each
/// iteration updates `g` then `f`, so the column sums of the returned plan
/// are exact and the residual is driven by the rows. Hitting `max_iters` is
/// not an error: the last iterate is returned with `converged == false`.
pub fn sinkhorn(
    mu_source: &[f64],
    mu_target: &[f64],
    cost: &DenseMatrix,
    epsilon: f64,
    options: &SinkhornOptions,
) -> Result<TransportPlan> {
    let (n, m) = cost.shape();
    check_weights("source", mu_source, n)?;
    check_weights("target", mu_target, m)?;
    if !cost.all_finite() {
        return Err(Error::NonFinite("Sinkhorn cost matrix".into()));
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::contract(format!("epsilon must be positive, got {epsilon}")));
    }

    let log_mu: Vec<f64> = mu_source.iter().map(|w| w.ln()).collect();
    let log_nu: Vec<f64> = mu_target.iter().map(|w| w.ln()).collect();
    let inv_eps = 1.0 / epsilon;
    // Scaled costs, row-major and column-major, so both updates stream.
    let scaled = cost.scale(inv_eps);
    let scaled_t = scaled.transpose();
    let mut scratch = vec![0.0; n.max(m)];
    let mut update_f = |g: &[f64], f: &mut [f64]| {
        for (i, fi) in f.iter_mut().enumerate() {
            let row = scaled.row(i);
            for j in 0..m {
                scratch[j] = log_nu[j] + g[j] * inv_eps - row[j];
            }
            *fi = neg_eps_lse(&scratch[..m], epsilon);
        }
    };
    let mut col_scratch = vec![0.0; n];
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let mut f_next = vec![0.0; n];
    update_f(&g, &mut f);
    let mut iters = 0;

    while iters < options.max_iters {
        iters += 1;
        for (j, gj) in g.iter_mut().enumerate() {
            let col = scaled_t.row(j);
            for i in 0..n {
                col_scratch[i] = log_mu[i] + f[i] * inv_eps - col[i];
            }
            *gj = neg_eps_lse(&col_scratch, epsilon);
        }
        // Row sums of the current plan are μ_i·exp((f_i − f'_i)/ε), where f'
        // is the next f-update, so the residual check costs nothing extra.
        update_f(&g, &mut f_next);
        let residual = mu_source
            .iter()
            .enumerate()
            .map(|(i, &mu)| (mu * ((f[i] - f_next[i]) * inv_eps).exp() - mu).abs())
            .fold(0.0, f64::max);
        if residual <= options.tol || iters == options.max_iters {
            break;
        }
        std::mem::swap(&mut f, &mut f_next);
    }

    let matrix = DenseMatrix::from_fn(n, m, |i, j| {
        ((f[i] + g[j] - cost.get(i, j)) * inv_eps + log_mu[i] + log_nu[j]).exp()
    });
    let marginal_residual = marginal_residual(&matrix, mu_source, mu_target);
    let converged = marginal_residual <= options.tol;
    if !converged {
        log::debug!("sinkhorn stopped after {iters} iterations with residual {marginal_residual:.3e}");
    }
    Ok(TransportPlan {
        matrix,
        epsilon,
        iterations_used: iters,
        marginal_residual,
        converged,
    })
}

/// Largest violation of either marginal constraint.
pub fn marginal_residual(plan: &DenseMatrix, mu_source: &[f64], mu_target: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, &mu) in mu_source.iter().enumerate() {
        worst = worst.max((plan.row(i).iter().sum::<f64>() - mu).abs());
    }
    let cols = plan.sum_rows();
    for (j, &nu) in mu_target.iter().enumerate() {
        worst = worst.max((cols.data()[j] - nu).abs());
    }
    worst
}
