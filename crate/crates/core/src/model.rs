//! Encoder `f_φ` (domain stems, shared scene stem, shared trunk), policy
//! head `π_θ`, behaviour-cloning losses and the total objective.
//!
//! Parameters for both embodiments live in one [`ParamSet`]. The trunk and
//! head have exactly one copy; each embodiment owns its input stem. Scene
//! (appearance) features bypass the embodiment stems and go through a stem
//! shared by both domains, the way a single vision stem sees the camera
//! stream of either embodiment.

use serde::{Deserialize, Serialize};

use crate::dtw::{dtw_cost_matrix, pointwise_cost_matrix, pseudo_pairs};
use crate::error::{Error, Result};
use crate::geometry::{ChunkedAction, Domain};
use crate::numkit::{DenseMatrix, Gradients, ParamSet, SeededRng, Stream, Tape, Var};
use crate::transport::{joint_ot_loss_scaled, mmd_loss, CostScale, SinkhornOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Identity,
}

pub const LATENT_NORM_EPS: f64 = 1e-8;

/// Layer widths of every stack. Each `*_widths` list excludes the input
/// width, which is implied by what feeds the stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub source_in: usize,
    pub target_in: usize,
    /// Width of the shared scene features; `0` disables the scene stem.
    pub scene_in: usize,
    pub stem_widths: Vec<usize>,
    pub trunk_widths: Vec<usize>,
    pub head_widths: Vec<usize>,
    pub horizon: usize,
    pub action_dim: usize,
    pub activation: Activation,
    /// Rescale every latent row to unit root-mean-square, so alignment
    /// losses cannot be lowered by shrinking the latent space.
    #[serde(default)]
    pub latent_norm: bool,
}

impl ModelConfig {
    /// Dense stand-in for the stem/trunk/head topology: 2-layer stems and
    /// trunk of width 64, a 32-dim latent and a 2-layer head.
    pub fn desk_scale(source_in: usize, target_in: usize, scene_in: usize, horizon: usize, action_dim: usize) -> Self {
        Self {
            source_in,
            target_in,
            scene_in,
            stem_widths: vec![64, 64],
            trunk_widths: vec![64, 32],
            head_widths: vec![64, horizon * action_dim],
            horizon,
            action_dim,
            activation: Activation::Tanh,
            latent_norm: true,
        }
    }

    pub fn latent_dim(&self) -> usize {
        *self.trunk_widths.last().expect("trunk has at least one layer")
    }

    pub fn projection_dim(&self) -> usize {
        *self.stem_widths.last().expect("stem has at least one layer")
    }

    fn validate(&self) -> Result<()> {
        if self.stem_widths.is_empty() || self.trunk_widths.is_empty() || self.head_widths.is_empty() {
            return Err(Error::contract("every stack needs at least one layer"));
        }
        if *self.head_widths.last().unwrap() != self.horizon * self.action_dim {
            return Err(Error::contract(format!(
                "head emits {} values but a {}x{} chunk is required",
                self.head_widths.last().unwrap(),
                self.horizon,
                self.action_dim
            )));
        }
        Ok(())
    }
}

/// Slot indices of one dense stack inside the shared [`ParamSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Stack {
    /// `(weight slot, bias slot)` per layer.
    layers: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamSet,
    stem_source: Stack,
    stem_target: Stack,
    scene: Option<Stack>,
    trunk: Stack,
    head: Stack,
}

/// Parameter leaves of one forward pass.
#[derive(Debug, Clone)]
pub struct Bound {
    leaves: Vec<Var>,
}

impl Bound {
    pub fn leaves(&self) -> &[Var] {
        &self.leaves
    }

    /// Per-parameter gradients in [`ParamSet`] order.
    pub fn collect(&self, grads: &mut Gradients, params: &ParamSet) -> Vec<DenseMatrix> {
        self.leaves
            .iter()
            .zip(params.values())
            .map(|(&v, p)| grads.take_or_zeros(v, p.rows(), p.cols()))
            .collect()
    }
}

/// Observation features for one embodiment: `embodiment` goes through that
/// domain's stem, `scene` through the shared scene stem.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderInput {
    pub domain: Domain,
    pub embodiment: DenseMatrix,
    pub scene: DenseMatrix,
}

fn build_stack(params: &mut ParamSet, name: &str, input: usize, widths: &[usize], rng: &mut SeededRng) -> Stack {
    let mut fan_in = input;
    let mut layers = Vec::with_capacity(widths.len());
    for (k, &out) in widths.iter().enumerate() {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let w = DenseMatrix::from_fn(fan_in, out, |_, _| rng.range(-bound, bound));
        let b = DenseMatrix::from_fn(1, out, |_, _| rng.range(-bound, bound));
        let ws = params.push(format!("{name}.{k}.weight"), w);
        let bs = params.push(format!("{name}.{k}.bias"), b);
        layers.push((ws, bs));
        fan_in = out;
    }
    Stack { layers }
}

impl Model {
    /// Fan-in scaled uniform initialisation, `U(−1/√fan_in, 1/√fan_in)`,
    /// from the `Init` stream of `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = SeededRng::new(seed, Stream::Init);
        let mut params = ParamSet::new();
        let stem_source = build_stack(
            &mut params,
            "stem_source",
            config.source_in,
            &config.stem_widths,
            &mut rng,
        );
        let stem_target = build_stack(
            &mut params,
            "stem_target",
            config.target_in,
            &config.stem_widths,
            &mut rng,
        );
        let scene = (config.scene_in > 0).then(|| {
            build_stack(
                &mut params,
                "scene",
                config.scene_in,
                &[config.projection_dim()],
                &mut rng,
            )
        });
        let trunk = build_stack(
            &mut params,
            "trunk",
            config.projection_dim(),
            &config.trunk_widths,
            &mut rng,
        );
        let head = build_stack(&mut params, "head", config.latent_dim(), &config.head_widths, &mut rng);
        Ok(Self {
            config,
            params,
            stem_source,
            stem_target,
            scene,
            trunk,
            head,
        })
    }

    /// Rebuilds a model around stored parameters, checking names and shapes.
    pub fn from_params(config: ModelConfig, params: ParamSet) -> Result<Self> {
        let mut model = Self::new(config, 0)?;
        if model.params.names() != params.names() {
            return Err(Error::contract("parameter names do not match the model layout"));
        }
        for (a, b) in model.params.values().iter().zip(params.values()) {
            if a.shape() != b.shape() {
                return Err(Error::shape("stored parameter shape does not match the model layout"));
            }
        }
        model.params = params;
        Ok(model)
    }

    /// Slots belonging to the encoder `φ` (stems, scene stem, trunk).
    pub fn encoder_slots(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for s in [&self.stem_source, &self.stem_target, &self.trunk]
            .into_iter()
            .chain(self.scene.as_ref())
        {
            for &(w, b) in &s.layers {
                out.extend([w, b]);
            }
        }
        out.sort_unstable();
        out
    }

    /// Slots belonging to the policy head `θ`.
    pub fn head_slots(&self) -> Vec<usize> {
        self.head.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }

    pub fn trunk_slots(&self) -> Vec<usize> {
        self.trunk.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }

    pub fn bind(&self, tape: &mut Tape) -> Bound {
        Bound {
            leaves: self.params.values().iter().map(|p| tape.leaf(p.clone())).collect(),
        }
    }

    fn activate(&self, tape: &mut Tape, x: Var) -> Var {
        match self.config.activation {
            Activation::Tanh => tape.tanh(x),
            Activation::Identity => x,
        }
    }

    /// Dense layers with the activation between (not after) layers.
    fn run_stack(&self, tape: &mut Tape, bound: &Bound, stack: &Stack, mut x: Var) -> Result<Var> {
        for (k, &(w, b)) in stack.layers.iter().enumerate() {
            if k > 0 {
                x = self.activate(tape, x);
            }
            let xw = tape.matmul(x, bound.leaves[w])?;
            x = tape.add_row(xw, bound.leaves[b])?;
        }
        Ok(x)
    }

    /// `z = trunk(act(stem_domain(embodiment) + scene_stem(scene)))`.
    pub fn encode(&self, tape: &mut Tape, bound: &Bound, input: &EncoderInput) -> Result<Var> {
        let (stem, expected) = match input.domain {
            Domain::Source => (&self.stem_source, self.config.source_in),
            Domain::Target => (&self.stem_target, self.config.target_in),
        };
        if input.embodiment.cols() != expected {
            return Err(Error::contract(format!(
                "{} stem expects {expected} features, got {}",
                input.domain,
                input.embodiment.cols()
            )));
        }
        if input.scene.cols() != self.config.scene_in || input.scene.rows() != input.embodiment.rows() {
            return Err(Error::contract(format!(
                "scene features must be {}x{}, got {:?}",
                input.embodiment.rows(),
                self.config.scene_in,
                input.scene.shape()
            )));
        }
        let x = tape.leaf(input.embodiment.clone());
        let mut h = self.run_stack(tape, bound, stem, x)?;
        if let Some(scene) = &self.scene {
            let s_in = tape.leaf(input.scene.clone());
            let s = self.run_stack(tape, bound, scene, s_in)?;
            h = tape.add(h, s)?;
        }
        let h = self.activate(tape, h);
        let z = self.run_stack(tape, bound, &self.trunk, h)?;
        Ok(if self.config.latent_norm {
            tape.rms_norm_rows(z, LATENT_NORM_EPS)
        } else {
            z
        })
    }

    /// Flattened `B x (T·d)` action chunks in normalised units.
    pub fn decode(&self, tape: &mut Tape, bound: &Bound, z: Var) -> Result<Var> {
        if tape.value(z).cols() != self.config.latent_dim() {
            return Err(Error::contract(format!(
                "head expects latents of width {}, got {}",
                self.config.latent_dim(),
                tape.value(z).cols()
            )));
        }
        self.run_stack(tape, bound, &self.head, z)
    }

    /// Forward pass without gradients.
    pub fn encode_values(&self, input: &EncoderInput) -> Result<DenseMatrix> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let z = self.encode(&mut tape, &bound, input)?;
        Ok(tape.value(z).clone())
    }

    /// Encode and decode without gradients; rows are flattened chunks.
    pub fn predict(&self, input: &EncoderInput) -> Result<DenseMatrix> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let z = self.encode(&mut tape, &bound, input)?;
        let out = self.decode(&mut tape, &bound, z)?;
        Ok(tape.value(out).clone())
    }

    /// Reshapes row `r` of a prediction into a normalised chunk.
    pub fn prediction_chunk(&self, prediction: &DenseMatrix, r: usize) -> Result<ChunkedAction> {
        let values = DenseMatrix::from_vec(self.config.horizon, self.config.action_dim, prediction.row(r).to_vec())?;
        ChunkedAction::new(values, true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcKind {
    Mse,
    /// Huber-style loss with transition at `|x| = 1`.
    SmoothL1,
}

impl BcKind {
    fn value_and_slope(self, r: f64) -> (f64, f64) {
        match self {
            BcKind::Mse => (r * r, 2.0 * r),
            BcKind::SmoothL1 => {
                if r.abs() < 1.0 {
                    (0.5 * r * r, r)
                } else {
                    (r.abs() - 0.5, r.signum())
                }
            }
        }
    }
}

/// Behaviour-cloning loss configuration per embodiment.
///
/// `source_dims` restricts the source loss to the listed per-step dims
/// (e.g. position only, when the demonstrator carries no orientation or
/// gripper); the target loss always covers every dim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcLossSpec {
    pub kind: BcKind,
    pub source_dims: Option<Vec<usize>>,
}

impl BcLossSpec {
    pub fn mse() -> Self {
        Self {
            kind: BcKind::Mse,
            source_dims: None,
        }
    }

    fn mask(&self, domain: Domain, action_dim: usize) -> Vec<bool> {
        match (domain, &self.source_dims) {
            (Domain::Source, Some(dims)) => (0..action_dim).map(|k| dims.contains(&k)).collect(),
            _ => vec![true; action_dim],
        }
    }
}

/// Mean per-element loss between flattened predictions and targets, plus
/// its gradient w.r.t. the predictions. Masked elements contribute nothing.
pub fn bc_loss_value(
    pred: &DenseMatrix,
    target: &DenseMatrix,
    spec: &BcLossSpec,
    domain: Domain,
    action_dim: usize,
) -> Result<(f64, DenseMatrix)> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(format!(
            "prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    if action_dim == 0 || pred.cols() % action_dim != 0 {
        return Err(Error::shape("chunk width is not a multiple of the action dim"));
    }
    let mask = spec.mask(domain, action_dim);
    let per_step = mask.iter().filter(|&&m| m).count();
    let count = (pred.rows() * (pred.cols() / action_dim) * per_step) as f64;
    if count == 0.0 {
        return Err(Error::contract("behaviour-cloning mask selects no elements"));
    }
    let mut total = 0.0;
    let mut grad = DenseMatrix::zeros(pred.rows(), pred.cols());
    for r in 0..pred.rows() {
        for c in 0..pred.cols() {
            if !mask[c % action_dim] {
                continue;
            }
            let (v, s) = spec.kind.value_and_slope(pred.get(r, c) - target.get(r, c));
            total += v;
            grad.set(r, c, s / count);
        }
    }
    Ok((total / count, grad))
}

pub fn bc_loss(
    tape: &mut Tape,
    pred: Var,
    target: &DenseMatrix,
    spec: &BcLossSpec,
    domain: Domain,
    action_dim: usize,
) -> Result<Var> {
    let (value, grad) = bc_loss_value(tape.value(pred), target, spec, domain, action_dim)?;
    tape.fused_scalar(value, vec![(pred, grad)])
}

/// How source and target samples are paired before discounting the cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Row-wise argmin of the DTW cost between action chunks.
    Dtw,
    /// Row-wise argmin of step-aligned squared error (ablation).
    Pointwise,
}

/// Latent alignment term added to the behaviour-cloning loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Alignment {
    None,
    Ot {
        /// `None` uses the bare latent cost (marginal OT).
        shaping: Option<(Pairing, f64)>,
        epsilon: f64,
        sinkhorn: SinkhornOptions,
        /// Per-step action dims compared when pairing.
        pairing_dims: Vec<usize>,
        #[serde(default)]
        cost_scale: CostScale,
    },
    Mmd {
        sigma: f64,
    },
}

/// One side of a co-training minibatch.
#[derive(Debug, Clone)]
pub struct Batch {
    pub input: EncoderInput,
    /// Normalised flattened chunks, `B x (T·d)`.
    pub actions: DenseMatrix,
}

impl Batch {
    pub fn chunks(&self, horizon: usize, action_dim: usize, dims: &[usize]) -> Result<Vec<ChunkedAction>> {
        (0..self.actions.rows())
            .map(|r| {
                let c = ChunkedAction::new(
                    DenseMatrix::from_vec(horizon, action_dim, self.actions.row(r).to_vec())?,
                    true,
                )?;
                c.select_dims(dims)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub bc_source: f64,
    pub bc_target: f64,
    pub ot_joint: f64,
    pub total: f64,
    pub alpha: f64,
    /// Marginal residual of the Sinkhorn plan, when one was computed.
    pub sinkhorn_residual: f64,
}

/// Total objective on one tape: `bc_source + bc_target + α·alignment`.
///
/// With `alpha == 0` the alignment term is still evaluated and reported but
/// is not recorded on the tape, so it contributes no gradient at all.
pub struct Objective<'a> {
    pub bc: &'a BcLossSpec,
    pub alignment: &'a Alignment,
    pub alpha: f64,
}

pub fn total_loss(
    model: &Model,
    tape: &mut Tape,
    bound: &Bound,
    source: &Batch,
    target: &Batch,
    objective: &Objective<'_>,
) -> Result<(Var, LossBreakdown)> {
    if source.actions.rows() != target.actions.rows() {
        return Err(Error::contract("source and target batches must have equal size"));
    }
    let cfg = &model.config;
    let zs = model.encode(tape, bound, &source.input)?;
    let zt = model.encode(tape, bound, &target.input)?;
    let ps = model.decode(tape, bound, zs)?;
    let pt = model.decode(tape, bound, zt)?;
    let bc_s = bc_loss(
        tape,
        ps,
        &source.actions,
        objective.bc,
        source.input.domain,
        cfg.action_dim,
    )?;
    let bc_t = bc_loss(
        tape,
        pt,
        &target.actions,
        objective.bc,
        target.input.domain,
        cfg.action_dim,
    )?;

    let (align_value, align_grads, residual) = match objective.alignment {
        Alignment::None => (0.0, None, 0.0),
        Alignment::Ot {
            shaping,
            epsilon,
            sinkhorn,
            pairing_dims,
            cost_scale,
        } => {
            let pairs = match shaping {
                Some((pairing, lambda)) => {
                    let a_s = source.chunks(cfg.horizon, cfg.action_dim, pairing_dims)?;
                    let a_t = target.chunks(cfg.horizon, cfg.action_dim, pairing_dims)?;
                    let costs = match pairing {
                        Pairing::Dtw => dtw_cost_matrix(&a_s, &a_t)?,
                        Pairing::Pointwise => pointwise_cost_matrix(&a_s, &a_t)?,
                    };
                    Some((pseudo_pairs(&costs)?, *lambda))
                }
                None => None,
            };
            let out = joint_ot_loss_scaled(
                tape.value(zs),
                tape.value(zt),
                pairs.as_ref().map(|(p, l)| (p, *l)),
                *epsilon,
                sinkhorn,
                *cost_scale,
            )?;
            (
                out.value,
                Some((out.grad_source, out.grad_target)),
                out.plan.marginal_residual,
            )
        }
        Alignment::Mmd { sigma } => {
            let out = mmd_loss(tape.value(zs), tape.value(zt), *sigma)?;
            (out.value, Some((out.grad_source, out.grad_target)), 0.0)
        }
    };

    let bc_sum = tape.add(bc_s, bc_t)?;
    let root = match align_grads {
        Some((gs, gt)) if objective.alpha != 0.0 => {
            let align = tape.fused_scalar(align_value, vec![(zs, gs), (zt, gt)])?;
            let weighted = tape.scale(align, objective.alpha);
            tape.add(bc_sum, weighted)?
        }
        _ => bc_sum,
    };
    let breakdown = LossBreakdown {
        bc_source: tape.scalar_value(bc_s),
        bc_target: tape.scalar_value(bc_t),
        ot_joint: align_value,
        total: tape.scalar_value(root),
        alpha: objective.alpha,
        sinkhorn_residual: residual,
    };
    Ok((root, breakdown))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(activation: Activation) -> ModelConfig {
        ModelConfig {
            source_in: 3,
            target_in: 3,
            scene_in: 0,
            stem_widths: vec![3],
            trunk_widths: vec![3],
            head_widths: vec![4],
            horizon: 2,
            action_dim: 2,
            activation,
            latent_norm: false,
        }
    }

    fn input(domain: Domain, rows: &[Vec<f64>]) -> EncoderInput {
        EncoderInput {
            domain,
            embodiment: DenseMatrix::from_rows(rows).unwrap(),
            scene: DenseMatrix::zeros(rows.len(), 0),
        }
    }

    #[test]
    fn identity_layers_pass_observation_through() {
        let mut m = Model::new(tiny(Activation::Identity), 1).unwrap();
        for name in ["stem_source.0", "trunk.0"] {
            let w = m.params.slot_of(&format!("{name}.weight")).unwrap();
            let b = m.params.slot_of(&format!("{name}.bias")).unwrap();
            *m.params.get_mut(w) = DenseMatrix::identity(3);
            *m.params.get_mut(b) = DenseMatrix::zeros(1, 3);
        }
        let x = input(Domain::Source, &[vec![0.3, -1.0, 2.0], vec![1.0, 0.0, -0.5]]);
        assert_eq!(m.encode_values(&x).unwrap(), x.embodiment);
    }

    #[test]
    fn zero_weights_give_input_independent_latent() {
        let mut m = Model::new(tiny(Activation::Tanh), 3).unwrap();
        for slot in 0..m.params.len() {
            if m.params.names()[slot].ends_with("weight") {
                let (r, c) = m.params.get(slot).shape();
                *m.params.get_mut(slot) = DenseMatrix::zeros(r, c);
            }
        }
        let z = m
            .encode_values(&input(Domain::Target, &[vec![1.0, 2.0, 3.0], vec![-4.0, 0.0, 9.0]]))
            .unwrap();
        assert_eq!(z.row(0), z.row(1));
        let p = m.predict(&input(Domain::Target, &[vec![5.0, 5.0, 5.0]])).unwrap();
        let hb = m.params.slot_of("head.0.bias").unwrap();
        assert_eq!(p.row(0), m.params.get(hb).data());
    }

    #[test]
    fn wrong_input_width_is_rejected() {
        let m = Model::new(tiny(Activation::Tanh), 0).unwrap();
        assert!(matches!(
            m.encode_values(&input(Domain::Source, &[vec![1.0, 2.0]])),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn head_must_match_chunk_shape() {
        let mut c = tiny(Activation::Tanh);
        c.head_widths = vec![5];
        assert!(Model::new(c, 0).is_err());
    }

    #[test]
    fn smooth_l1_closed_form() {
        let spec = BcLossSpec {
            kind: BcKind::SmoothL1,
            source_dims: None,
        };
        let (v, g) = bc_loss_value(
            &DenseMatrix::scalar(0.5),
            &DenseMatrix::scalar(0.0),
            &spec,
            Domain::Target,
            1,
        )
        .unwrap();
        assert_eq!(v, 0.125);
        assert_eq!(g.data(), &[0.5]);
        let (v, _) = bc_loss_value(
            &DenseMatrix::scalar(3.0),
            &DenseMatrix::scalar(0.0),
            &spec,
            Domain::Target,
            1,
        )
        .unwrap();
        assert_eq!(v, 2.5);
    }

    #[test]
    fn equal_prediction_has_zero_loss() {
        let p = DenseMatrix::from_fn(3, 4, |i, j| (i + 2 * j) as f64 * 0.3);
        let (v, g) = bc_loss_value(&p, &p, &BcLossSpec::mse(), Domain::Source, 2).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn source_mask_ignores_unlisted_dims() {
        let spec = BcLossSpec {
            kind: BcKind::SmoothL1,
            source_dims: Some(vec![0]),
        };
        let pred = DenseMatrix::from_rows(&[vec![0.1, 0.2, 0.3, 0.4]]).unwrap();
        let mut target = DenseMatrix::zeros(1, 4);
        let (a, _) = bc_loss_value(&pred, &target, &spec, Domain::Source, 2).unwrap();
        target.set(0, 1, 100.0);
        target.set(0, 3, -7.0);
        let (b, _) = bc_loss_value(&pred, &target, &spec, Domain::Source, 2).unwrap();
        assert_eq!(a, b);
        let (c, _) = bc_loss_value(&pred, &target, &spec, Domain::Target, 2).unwrap();
        assert!(c > a);
    }
}
