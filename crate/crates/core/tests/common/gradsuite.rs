//! Central finite-difference checks of every differentiable path.
//!
//! Paths without Sinkhorn are compared with the function they differentiate.
//! Paths through Sinkhorn hold the plan fixed, which makes their gradient the
//! exact derivative of the entropic objective `⟨T,C⟩ + ε·KL(T‖μ⊗ν)` at the
//! fixed point; the check re-solves the plan at every probe and
//! differentiates that objective numerically.

use xdomain_core::dtw::{dtw_cost_matrix, pointwise_cost_matrix, pseudo_pairs, PseudoPairAssignment};
use xdomain_core::geometry::Domain;
use xdomain_core::model::{
    bc_loss_value, total_loss, Activation, Alignment, Batch, BcKind, BcLossSpec, EncoderInput, Model, ModelConfig,
    Objective, Pairing,
};
use xdomain_core::numkit::{DenseMatrix, SeededRng, Tape};
use xdomain_core::transport::{
    joint_ot_loss_scaled, latent_sq_dist, mmd_loss, shape_cost, sinkhorn, uniform_weights, CostScale, SinkhornOptions,
};

use super::{all_coords, entropic_objective, fd_check, random_matrix, rng};

const H: f64 = 1e-5;

pub fn converged() -> SinkhornOptions {
    SinkhornOptions {
        max_iters: 200_000,
        tol: 1e-13,
    }
}

/// Worst relative error seen for one family of checks.
#[derive(Debug, Clone)]
pub struct FamilyResult {
    pub name: &'static str,
    pub worst: f64,
    pub tolerance: f64,
    pub configs: usize,
}

impl FamilyResult {
    pub fn passed(&self) -> bool {
        self.worst <= self.tolerance
    }
}

type Unary = fn(&mut Tape, xdomain_core::numkit::Var, xdomain_core::numkit::Var) -> xdomain_core::numkit::Var;

/// `Σ R ⊙ op(a, b)` and its tape gradients w.r.t. `a` and `b`.
fn weighted(a: &DenseMatrix, b: &DenseMatrix, r: &DenseMatrix, op: Unary) -> (f64, DenseMatrix, DenseMatrix) {
    let mut tape = Tape::new();
    let va = tape.leaf(a.clone());
    let vb = tape.leaf(b.clone());
    let vr = tape.leaf(r.clone());
    let out = op(&mut tape, va, vb);
    let prod = tape.mul(out, vr).unwrap();
    let root = tape.sum(prod);
    let grads = tape.backward(root).unwrap();
    let ga = grads
        .get(va)
        .cloned()
        .unwrap_or_else(|| DenseMatrix::zeros(a.rows(), a.cols()));
    let gb = grads
        .get(vb)
        .cloned()
        .unwrap_or_else(|| DenseMatrix::zeros(b.rows(), b.cols()));
    (tape.scalar_value(root), ga, gb)
}

fn primitive_family(configs: usize) -> Vec<FamilyResult> {
    let ops: [(&'static str, Unary, bool); 8] = [
        ("matmul", |t, a, b| t.matmul(a, b).unwrap(), true),
        ("add_row", |t, a, b| t.add_row(a, b).unwrap(), false),
        ("add", |t, a, b| t.add(a, b).unwrap(), false),
        ("sub", |t, a, b| t.sub(a, b).unwrap(), false),
        ("mul", |t, a, b| t.mul(a, b).unwrap(), false),
        ("scale", |t, a, _| t.scale(a, -1.7), false),
        ("tanh", |t, a, _| t.tanh(a), false),
        ("rms_norm_rows", |t, a, _| t.rms_norm_rows(a, 1e-8), false),
    ];
    let mut r = rng(900);
    let mut out = Vec::new();
    for (name, op, is_matmul) in ops {
        let mut worst: f64 = 0.0;
        for _ in 0..configs {
            let (n, k, m) = (1 + r.below(4), 1 + r.below(4), 1 + r.below(4));
            let a = random_matrix(&mut r, n, k, 1.5);
            let b = if is_matmul {
                random_matrix(&mut r, k, m, 1.5)
            } else if name == "add_row" {
                random_matrix(&mut r, 1, k, 1.5)
            } else {
                random_matrix(&mut r, n, k, 1.5)
            };
            let out_cols = if is_matmul { m } else { k };
            let w = random_matrix(&mut r, n, out_cols, 1.0);
            let (_, ga, gb) = weighted(&a, &b, &w, op);
            worst = worst.max(fd_check(&a, &ga, &all_coords(&a), H, |x| weighted(x, &b, &w, op).0));
            worst = worst.max(fd_check(&b, &gb, &all_coords(&b), H, |x| weighted(&a, x, &w, op).0));
        }
        out.push(FamilyResult {
            name,
            worst,
            tolerance: 1e-4,
            configs,
        });
    }
    out
}

fn bc_family(configs: usize) -> FamilyResult {
    let mut r = rng(901);
    let mut worst: f64 = 0.0;
    for c in 0..configs {
        let (rows, horizon, dim) = (1 + r.below(4), 1 + r.below(4), 1 + r.below(3));
        let pred = random_matrix(&mut r, rows, horizon * dim, 2.0);
        let target = random_matrix(&mut r, rows, horizon * dim, 2.0);
        let spec = BcLossSpec {
            kind: if c % 2 == 0 { BcKind::Mse } else { BcKind::SmoothL1 },
            source_dims: (c % 3 == 0).then(|| vec![0]),
        };
        let domain = if c % 4 < 2 { Domain::Source } else { Domain::Target };
        let (_, g) = bc_loss_value(&pred, &target, &spec, domain, dim).unwrap();
        worst = worst.max(fd_check(&pred, &g, &all_coords(&pred), H, |p| {
            bc_loss_value(p, &target, &spec, domain, dim).unwrap().0
        }));
    }
    FamilyResult {
        name: "bc_loss",
        worst,
        tolerance: 1e-4,
        configs,
    }
}

fn mmd_family(configs: usize) -> FamilyResult {
    let mut r = rng(902);
    let mut worst: f64 = 0.0;
    for _ in 0..configs {
        let (n, m, d) = (1 + r.below(5), 1 + r.below(5), 1 + r.below(4));
        let zs = random_matrix(&mut r, n, d, 1.0);
        let zt = random_matrix(&mut r, m, d, 1.0);
        let sigma = r.range(0.5, 2.0);
        let out = mmd_loss(&zs, &zt, sigma).unwrap();
        worst = worst.max(fd_check(&zs, &out.grad_source, &all_coords(&zs), H, |x| {
            mmd_loss(x, &zt, sigma).unwrap().value
        }));
        worst = worst.max(fd_check(&zt, &out.grad_target, &all_coords(&zt), H, |x| {
            mmd_loss(&zs, x, sigma).unwrap().value
        }));
    }
    FamilyResult {
        name: "mmd",
        worst,
        tolerance: 1e-4,
        configs,
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Entropic objective of the (optionally shaped, optionally mean-scaled)
/// latent cost, re-solved.
fn ot_objective(
    zs: &DenseMatrix,
    zt: &DenseMatrix,
    pairs: Option<&(PseudoPairAssignment, f64)>,
    eps: f64,
    scale: CostScale,
) -> f64 {
    let base = latent_sq_dist(zs, zt).unwrap();
    let mean = base.data().iter().sum::<f64>() / base.len() as f64;
    let shaped = match pairs {
        Some((p, lambda)) => shape_cost(&base, p, *lambda).unwrap().shaped,
        None => base,
    };
    let cost = match scale {
        CostScale::Raw => shaped,
        CostScale::BatchMean => shaped.map(|c| c / mean),
    };
    let plan = sinkhorn(
        &uniform_weights(zs.rows()),
        &uniform_weights(zt.rows()),
        &cost,
        eps,
        &converged(),
    )
    .unwrap();
    entropic_objective(&plan.matrix, &cost, eps)
}

/// A fifth of the median cell of the cost actually transported, which keeps
/// the re-solved plans cheap to converge.
fn ot_epsilon(zs: &DenseMatrix, zt: &DenseMatrix, scale: CostScale) -> f64 {
    let d = latent_sq_dist(zs, zt).unwrap();
    let mean = d.data().iter().sum::<f64>() / d.len() as f64;
    let med = median(d.data());
    match scale {
        CostScale::Raw => 0.2 * med.max(1e-3),
        CostScale::BatchMean => 0.2 * (med / mean).max(1e-3),
    }
}

fn joint_ot_family(configs: usize) -> FamilyResult {
    let mut r = rng(903);
    let mut worst: f64 = 0.0;
    for c in 0..configs {
        let (n, m, d) = (1 + r.below(6), 1 + r.below(6), 1 + r.below(4));
        let zs = random_matrix(&mut r, n, d, 1.0);
        let zt = random_matrix(&mut r, m, d, 1.0);
        let shaping = (c % 4 != 0).then(|| {
            let a = DenseMatrix::from_fn(n, m, |_, _| r.uniform());
            (pseudo_pairs(&a).unwrap(), r.range(0.05, 0.9))
        });
        let scale = if c % 2 == 0 {
            CostScale::Raw
        } else {
            CostScale::BatchMean
        };
        let eps = ot_epsilon(&zs, &zt, scale);
        let out = joint_ot_loss_scaled(
            &zs,
            &zt,
            shaping.as_ref().map(|(p, l)| (p, *l)),
            eps,
            &converged(),
            scale,
        )
        .unwrap();
        worst = worst.max(fd_check(&zs, &out.grad_source, &all_coords(&zs), H, |x| {
            ot_objective(x, &zt, shaping.as_ref(), eps, scale)
        }));
        worst = worst.max(fd_check(&zt, &out.grad_target, &all_coords(&zt), H, |x| {
            ot_objective(&zs, x, shaping.as_ref(), eps, scale)
        }));
    }
    FamilyResult {
        name: "joint_ot",
        worst,
        tolerance: 1e-3,
        configs,
    }
}

fn tiny_config(rng: &mut SeededRng) -> ModelConfig {
    let horizon = 2 + rng.below(3);
    ModelConfig {
        source_in: 2 + rng.below(3),
        target_in: 2 + rng.below(3),
        scene_in: rng.below(3),
        stem_widths: vec![3 + rng.below(3), 4],
        trunk_widths: vec![4, 3],
        head_widths: vec![5, horizon * 2],
        horizon,
        action_dim: 2,
        activation: Activation::Tanh,
        latent_norm: rng.below(2) == 1,
    }
}

fn random_batch(rng: &mut SeededRng, cfg: &ModelConfig, domain: Domain, rows: usize) -> Batch {
    let width = match domain {
        Domain::Source => cfg.source_in,
        Domain::Target => cfg.target_in,
    };
    Batch {
        input: EncoderInput {
            domain,
            embodiment: random_matrix(rng, rows, width, 1.0),
            scene: random_matrix(rng, rows, cfg.scene_in, 1.0),
        },
        actions: random_matrix(rng, rows, cfg.horizon * cfg.action_dim, 1.0),
    }
}

/// Independent value of the objective: bc terms from plain forward passes,
/// the alignment term from the entropic objective (OT) or MMD value.
fn oracle_total(
    model: &Model,
    source: &Batch,
    target: &Batch,
    bc: &BcLossSpec,
    alignment: &Alignment,
    alpha: f64,
) -> f64 {
    let ad = model.config.action_dim;
    let ps = model.predict(&source.input).unwrap();
    let pt = model.predict(&target.input).unwrap();
    let bc_s = bc_loss_value(&ps, &source.actions, bc, Domain::Source, ad).unwrap().0;
    let bc_t = bc_loss_value(&pt, &target.actions, bc, Domain::Target, ad).unwrap().0;
    let zs = model.encode_values(&source.input).unwrap();
    let zt = model.encode_values(&target.input).unwrap();
    let align = match alignment {
        Alignment::None => 0.0,
        Alignment::Mmd { sigma } => mmd_loss(&zs, &zt, *sigma).unwrap().value,
        Alignment::Ot {
            shaping,
            epsilon,
            pairing_dims,
            cost_scale,
            ..
        } => {
            let pairs = shaping.map(|(pairing, lambda)| {
                let cfg = &model.config;
                let a_s = source.chunks(cfg.horizon, ad, pairing_dims).unwrap();
                let a_t = target.chunks(cfg.horizon, ad, pairing_dims).unwrap();
                let costs = match pairing {
                    Pairing::Dtw => dtw_cost_matrix(&a_s, &a_t).unwrap(),
                    Pairing::Pointwise => pointwise_cost_matrix(&a_s, &a_t).unwrap(),
                };
                (pseudo_pairs(&costs).unwrap(), lambda)
            });
            ot_objective(&zs, &zt, pairs.as_ref(), *epsilon, *cost_scale)
        }
    };
    bc_s + bc_t + alpha * align
}

/// Two results: objectives without a transport term, and with one.
fn total_loss_family(configs: usize) -> [FamilyResult; 2] {
    let mut r = rng(904);
    let mut worst = [0.0_f64; 2];
    for c in 0..configs {
        let cfg = tiny_config(&mut r);
        let model = Model::new(cfg.clone(), r.next_u64()).unwrap();
        let rows = 2 + r.below(4);
        let source = random_batch(&mut r, &cfg, Domain::Source, rows);
        let target = random_batch(&mut r, &cfg, Domain::Target, rows);
        let zs = model.encode_values(&source.input).unwrap();
        let zt = model.encode_values(&target.input).unwrap();
        let cost_scale = if c % 10 < 5 {
            CostScale::Raw
        } else {
            CostScale::BatchMean
        };
        let eps = ot_epsilon(&zs, &zt, cost_scale);
        let alignment = match c % 5 {
            0 => Alignment::None,
            1 => Alignment::Mmd {
                sigma: r.range(0.5, 2.0),
            },
            k => Alignment::Ot {
                shaping: match k {
                    2 => Some((Pairing::Dtw, r.range(0.05, 0.9))),
                    3 => Some((Pairing::Pointwise, r.range(0.05, 0.9))),
                    _ => None,
                },
                epsilon: eps,
                sinkhorn: converged(),
                pairing_dims: vec![0, 1],
                cost_scale,
            },
        };
        let bc = BcLossSpec {
            kind: BcKind::Mse,
            source_dims: (c % 2 == 0).then(|| vec![0]),
        };
        let alpha = r.range(0.1, 1.0);
        let objective = Objective {
            bc: &bc,
            alignment: &alignment,
            alpha,
        };

        let mut tape = Tape::new();
        let bound = model.bind(&mut tape);
        let (root, _) = total_loss(&model, &mut tape, &bound, &source, &target, &objective).unwrap();
        let mut grads = tape.backward(root).unwrap();
        let analytic = bound.collect(&mut grads, &model.params);

        let w = &mut worst[usize::from(matches!(alignment, Alignment::Ot { .. }))];
        for slot in 0..model.params.len() {
            let p = model.params.get(slot).clone();
            // A few coordinates per parameter keep the cost linear in depth.
            let coords: Vec<usize> = (0..p.len().min(3)).map(|_| r.below(p.len())).collect();
            *w = w.max(fd_check(&p, &analytic[slot], &coords, H, |x| {
                let mut m = model.clone();
                *m.params.get_mut(slot) = x.clone();
                oracle_total(&m, &source, &target, &bc, &alignment, alpha)
            }));
        }
    }
    [
        FamilyResult {
            name: "total_loss",
            worst: worst[0],
            tolerance: 1e-4,
            configs: configs - configs * 3 / 5,
        },
        FamilyResult {
            name: "total_loss_ot",
            worst: worst[1],
            tolerance: 1e-3,
            configs: configs * 3 / 5,
        },
    ]
}

/// Runs every family over `configs` random configurations each (the two
/// total-loss families split one set of `configs` between them).
pub fn run(configs: usize) -> Vec<FamilyResult> {
    let mut out = primitive_family(configs);
    out.push(bc_family(configs));
    out.push(mmd_family(configs));
    out.push(joint_ot_family(configs));
    out.extend(total_loss_family(configs));
    out
}
