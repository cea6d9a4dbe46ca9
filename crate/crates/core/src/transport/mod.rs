//! Entropic and exact optimal transport, the behaviour-shaped joint OT loss,
//! the MMD baseline and the Wasserstein-2 alignment metric.

mod exact;
mod joint;
mod mmd;
mod sinkhorn;

pub use exact::{exact_ot, EXACT_OT_MAX_POINTS};
pub use joint::{
    joint_ot_loss, joint_ot_loss_from_actions, joint_ot_loss_scaled, latent_sq_dist, shape_cost, CostScale,
    JointOtLoss, ShapedCost,
};
pub use mmd::{mmd_loss, MmdLoss};
pub use sinkhorn::{epsilon_from_blur, marginal_residual, sinkhorn, uniform_weights, SinkhornOptions, TransportPlan};

use crate::error::{Error, Result};
use crate::numkit::DenseMatrix;

/// Settings for [`wasserstein2`] when the sets are too large to enumerate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct W2Options {
    pub blur: f64,
    pub sinkhorn: SinkhornOptions,
}

impl Default for W2Options {
    fn default() -> Self {
        Self {
            blur: 0.01,
            sinkhorn: SinkhornOptions {
                max_iters: 5000,
                tol: 1e-6,
            },
        }
    }
}

/// Evenly spaced deterministic subsample of `n` rows.
pub fn even_subsample(set: &DenseMatrix, n: usize) -> DenseMatrix {
    let total = set.rows();
    if n >= total {
        return set.clone();
    }
    let idx: Vec<usize> = (0..n).map(|k| k * total / n).collect();
    set.select_rows(&idx)
}

/// Wasserstein-2 distance between two point sets under squared Euclidean
/// ground cost, with uniform weights.
///
/// The larger set is subsampled (evenly spaced rows) to the size of the
/// smaller. Up to [`EXACT_OT_MAX_POINTS`] points the optimum is enumerated;
/// beyond that a low-blur Sinkhorn plan is used.
pub fn wasserstein2(a: &DenseMatrix, b: &DenseMatrix, options: &W2Options) -> Result<f64> {
    if a.rows() == 0 || b.rows() == 0 {
        return Err(Error::contract("Wasserstein-2 needs non-empty sets"));
    }
    let n = a.rows().min(b.rows());
    let (a, b) = (even_subsample(a, n), even_subsample(b, n));
    let cost = latent_sq_dist(&a, &b)?;
    let sq = if n <= EXACT_OT_MAX_POINTS {
        exact_ot(&cost)?.0
    } else {
        let w = uniform_weights(n);
        let plan = sinkhorn(&w, &w, &cost, epsilon_from_blur(options.blur), &options.sinkhorn)?;
        plan.transport_cost(&cost)?
    };
    Ok(sq.max(0.0).sqrt())
}
