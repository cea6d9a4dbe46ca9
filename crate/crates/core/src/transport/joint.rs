use serde::{Deserialize, Serialize};

use crate::dtw::{dtw_cost_matrix, pseudo_pairs, PseudoPairAssignment};
use crate::error::{Error, Result};
use crate::geometry::ChunkedAction;
use crate::numkit::DenseMatrix;

use super::sinkhorn::{sinkhorn, uniform_weights, SinkhornOptions, TransportPlan};

/// `D[i][j] = ‖z_source[i] − z_target[j]‖²`.
pub fn latent_sq_dist(z_source: &DenseMatrix, z_target: &DenseMatrix) -> Result<DenseMatrix> {
    if z_source.cols() != z_target.cols() {
        return Err(Error::contract(format!(
            "latent dims differ: {} vs {}",
            z_source.cols(),
            z_target.cols()
        )));
    }
    Ok(DenseMatrix::from_fn(z_source.rows(), z_target.rows(), |i, j| {
        z_source
            .row(i)
            .iter()
            .zip(z_target.row(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }))
}

/// Latent cost with the pseudo-paired cells scaled by `lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapedCost {
    pub base: DenseMatrix,
    pub shaped: DenseMatrix,
    pub lambda: f64,
    pub pairs: PseudoPairAssignment,
}

impl ShapedCost {
    /// Multiplier applied to cell `(i, j)`: `lambda` on pseudo-pairs, else 1.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        if self.pairs.is_paired(i, j) {
            self.lambda
        } else {
            1.0
        }
    }
}

pub fn shape_cost(base: &DenseMatrix, pairs: &PseudoPairAssignment, lambda: f64) -> Result<ShapedCost> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::contract(format!("lambda must lie in (0, 1), got {lambda}")));
    }
    if pairs.pair_index.len() != base.cols() {
        return Err(Error::shape(format!(
            "{} pseudo-pairs for {} target samples",
            pairs.pair_index.len(),
            base.cols()
        )));
    }
    if let Some(&i) = pairs.pair_index.iter().find(|&&i| i >= base.rows()) {
        return Err(Error::shape(format!(
            "pseudo-pair index {i} out of {} rows",
            base.rows()
        )));
    }
    let mut shaped = base.clone();
    for (j, &i) in pairs.pair_index.iter().enumerate() {
        shaped.set(i, j, lambda * base.get(i, j));
    }
    Ok(ShapedCost {
        base: base.clone(),
        shaped,
        lambda,
        pairs: pairs.clone(),
    })
}

/// Value and latent gradients of `Σ_ij T_ij·C̃_ij`.
#[derive(Debug, Clone)]
pub struct JointOtLoss {
    pub value: f64,
    pub grad_source: DenseMatrix,
    pub grad_target: DenseMatrix,
    pub plan: TransportPlan,
    /// Cost the plan was computed on (shaped, or the bare latent cost).
    pub cost: DenseMatrix,
}

/// How the latent cost is scaled before transport.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostScale {
    /// Squared latent distances as they are.
    #[default]
    Raw,
    /// Divided by the batch mean of the unshaped distances. The loss is
    /// then invariant to a global rescaling of the latents, so it cannot
    /// be lowered by contracting them.
    BatchMean,
}

/// OT loss between latent batches with an optional behavioural discount.
///
/// With `shaping = Some((pairs, λ))` the cost is `λ·D` on pseudo-paired
/// cells and `D` elsewhere; with `None` it is `D`. The plan and the pairing
/// are held constant when differentiating, so `∂L/∂C̃_ij = T_ij` and the
/// latent gradient is `±2·w_ij·T_ij·(z_s,i − z_t,j)` summed over cells.
pub fn joint_ot_loss(
    z_source: &DenseMatrix,
    z_target: &DenseMatrix,
    shaping: Option<(&PseudoPairAssignment, f64)>,
    epsilon: f64,
    options: &SinkhornOptions,
) -> Result<JointOtLoss> {
    joint_ot_loss_scaled(z_source, z_target, shaping, epsilon, options, CostScale::Raw)
}

/// [`joint_ot_loss`] with a choice of cost scaling. Under
/// [`CostScale::BatchMean`] the cost is `C̃ / m` with `m = mean(D)`, and
/// `m` is differentiated too: `∂L/∂D_ij = w_ij·T_ij/m − L/(m·N·M)`.
pub fn joint_ot_loss_scaled(
    z_source: &DenseMatrix,
    z_target: &DenseMatrix,
    shaping: Option<(&PseudoPairAssignment, f64)>,
    epsilon: f64,
    options: &SinkhornOptions,
    scale: CostScale,
) -> Result<JointOtLoss> {
    let base = latent_sq_dist(z_source, z_target)?;
    let (n, m) = base.shape();
    if n == 0 || m == 0 {
        return Err(Error::contract("OT loss needs non-empty batches"));
    }
    let (cost, weights) = match shaping {
        Some((pairs, lambda)) => {
            let shaped = shape_cost(&base, pairs, lambda)?;
            let w = DenseMatrix::from_fn(n, m, |i, j| shaped.weight(i, j));
            (shaped.shaped, w)
        }
        None => (base.clone(), DenseMatrix::filled(n, m, 1.0)),
    };
    let divisor = match scale {
        CostScale::Raw => 1.0,
        CostScale::BatchMean => {
            let mean = base.sum() / (n * m) as f64;
            if !(mean > 0.0) {
                return Err(Error::contract("batch-mean cost scaling needs distinct latents"));
            }
            mean
        }
    };
    let cost = if divisor == 1.0 {
        cost
    } else {
        cost.scale(1.0 / divisor)
    };
    let plan = sinkhorn(&uniform_weights(n), &uniform_weights(m), &cost, epsilon, options)?;
    let value = plan.transport_cost(&cost)?;
    // Share of the loss carried by the divisor, spread over every cell.
    let through_mean = match scale {
        CostScale::Raw => 0.0,
        CostScale::BatchMean => value / (divisor * (n * m) as f64),
    };

    let d = z_source.cols();
    let mut grad_source = DenseMatrix::zeros(n, d);
    let mut grad_target = DenseMatrix::zeros(m, d);
    for i in 0..n {
        for j in 0..m {
            let c = 2.0 * (plan.matrix.get(i, j) * weights.get(i, j) / divisor - through_mean);
            if c == 0.0 {
                continue;
            }
            for k in 0..d {
                let diff = c * (z_source.get(i, k) - z_target.get(j, k));
                grad_source.row_mut(i)[k] += diff;
                grad_target.row_mut(j)[k] -= diff;
            }
        }
    }
    Ok(JointOtLoss {
        value,
        grad_source,
        grad_target,
        plan,
        cost,
    })
}

/// Full pipeline from latents and action chunks: DTW costs between the
/// chunks, pseudo-pairs, shaped cost, Sinkhorn plan, loss and gradients.
pub fn joint_ot_loss_from_actions(
    z_source: &DenseMatrix,
    z_target: &DenseMatrix,
    a_source: &[ChunkedAction],
    a_target: &[ChunkedAction],
    lambda: f64,
    epsilon: f64,
    options: &SinkhornOptions,
) -> Result<(JointOtLoss, PseudoPairAssignment)> {
    if a_source.len() != z_source.rows() || a_target.len() != z_target.rows() {
        return Err(Error::shape("action batch sizes must match latent batch sizes"));
    }
    let pairs = pseudo_pairs(&dtw_cost_matrix(a_source, a_target)?)?;
    let loss = joint_ot_loss(z_source, z_target, Some((&pairs, lambda)), epsilon, options)?;
    Ok((loss, pairs))
}
