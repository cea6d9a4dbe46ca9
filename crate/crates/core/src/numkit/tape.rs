//! Define-by-run reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] is rebuilt for every forward pass. Each recorded operation
//! appends a node whose inputs already exist, so node ids are a topological
//! order and [`Tape::backward`] is a single reverse sweep.
//!
//! Losses whose gradient is cheaper to derive by hand (optimal-transport,
//! MMD and behaviour-cloning terms) enter the tape through
//! [`Tape::fused_scalar`]: the caller supplies the scalar value together with
//! its partial derivatives with respect to each input node.

use crate::error::{Error, Result};
use crate::numkit::DenseMatrix;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    RmsNormRows(Var, f64),
    Sum(Var),
    Fused(Vec<(Var, DenseMatrix)>),
}

#[derive(Debug)]
struct Node {
    value: DenseMatrix,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    adjoints: Vec<Option<DenseMatrix>>,
}

impl Gradients {
    /// Adjoint of `v`, or `None` when `v` does not influence the root.
    pub fn get(&self, v: Var) -> Option<&DenseMatrix> {
        self.adjoints.get(v.0).and_then(Option::as_ref)
    }

    /// Adjoint of `v`, materialising zeros of the given shape if unreached.
    pub fn take_or_zeros(&mut self, v: Var, rows: usize, cols: usize) -> DenseMatrix {
        self.adjoints
            .get_mut(v.0)
            .and_then(Option::take)
            .unwrap_or_else(|| DenseMatrix::zeros(rows, cols))
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: DenseMatrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records an input (parameter or constant). Constants are leaves whose
    /// adjoint the caller simply ignores.
    pub fn leaf(&mut self, value: DenseMatrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    /// `x + 1·b` where `b` is a single row broadcast over the rows of `x`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let value = self.value(x).add_row(self.value(b))?;
        Ok(self.push(value, Op::AddRow(x, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        Ok(self.push(value, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).scale(s);
        self.push(value, Op::Scale(a, s))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    /// Each row divided by its root-mean-square, `x / sqrt(mean(x²) + eps)`.
    pub fn rms_norm_rows(&mut self, a: Var, eps: f64) -> Var {
        let x = self.value(a);
        let mut value = x.clone();
        for r in 0..x.rows() {
            let scale = rms(x.row(r), eps);
            value.row_mut(r).iter_mut().for_each(|v| *v /= scale);
        }
        self.push(value, Op::RmsNormRows(a, eps))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = DenseMatrix::scalar(self.value(a).sum());
        self.push(value, Op::Sum(a))
    }

    /// Records a scalar whose partial derivatives were computed by the caller.
    /// Each `(input, grad)` pair must have matching shapes.
    pub fn fused_scalar(&mut self, value: f64, partials: Vec<(Var, DenseMatrix)>) -> Result<Var> {
        for (v, g) in &partials {
            if self.value(*v).shape() != g.shape() {
                return Err(Error::shape(format!(
                    "fused partial {:?} for node of shape {:?}",
                    g.shape(),
                    self.value(*v).shape()
                )));
            }
        }
        Ok(self.push(DenseMatrix::scalar(value), Op::Fused(partials)))
    }

    /// Reverse sweep from a scalar `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if self.value(root).shape() != (1, 1) {
            return Err(Error::contract(format!(
                "backward root must be scalar, got {:?}",
                self.value(root).shape()
            )));
        }
        let mut adj: Vec<Option<DenseMatrix>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[root.0] = Some(DenseMatrix::scalar(1.0));

        for id in (0..=root.0).rev() {
            let node = &self.nodes[id];
            // Leaves keep their adjoint for the caller.
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = adj[id].take() else { continue };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(self.value(*b))?;
                    let gb = self.value(*a).t_matmul(&g)?;
                    accumulate(&mut adj, *a, ga)?;
                    accumulate(&mut adj, *b, gb)?;
                }
                Op::AddRow(x, b) => {
                    accumulate(&mut adj, *b, g.sum_rows())?;
                    accumulate(&mut adj, *x, g)?;
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, g.clone())?;
                    accumulate(&mut adj, *b, g)?;
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, *b, g.scale(-1.0))?;
                    accumulate(&mut adj, *a, g)?;
                }
                Op::Mul(a, b) => {
                    let ga = g.hadamard(self.value(*b))?;
                    let gb = g.hadamard(self.value(*a))?;
                    accumulate(&mut adj, *a, ga)?;
                    accumulate(&mut adj, *b, gb)?;
                }
                Op::Scale(a, s) => accumulate(&mut adj, *a, g.scale(*s))?,
                Op::Tanh(a) => {
                    let ga = g.zip_map(&node.value, |gi, y| gi * (1.0 - y * y))?;
                    accumulate(&mut adj, *a, ga)?;
                }
                Op::RmsNormRows(a, eps) => {
                    // dx = (g - y·mean(g⊙y)) / rms(x), row by row.
                    let x = self.value(*a);
                    let mut ga = g.clone();
                    for r in 0..x.rows() {
                        let scale = rms(x.row(r), *eps);
                        let y = node.value.row(r);
                        let proj = g.row(r).iter().zip(y).map(|(gi, yi)| gi * yi).sum::<f64>() / y.len() as f64;
                        for (k, v) in ga.row_mut(r).iter_mut().enumerate() {
                            *v = (*v - y[k] * proj) / scale;
                        }
                    }
                    accumulate(&mut adj, *a, ga)?;
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    accumulate(&mut adj, *a, DenseMatrix::filled(r, c, g.data()[0]))?;
                }
                Op::Fused(partials) => {
                    let s = g.data()[0];
                    for (v, p) in partials {
                        accumulate(&mut adj, *v, p.scale(s))?;
                    }
                }
            }
        }
        Ok(Gradients { adjoints: adj })
    }
}

fn rms(row: &[f64], eps: f64) -> f64 {
    (row.iter().map(|v| v * v).sum::<f64>() / row.len() as f64 + eps).sqrt()
}

fn accumulate(adj: &mut [Option<DenseMatrix>], v: Var, g: DenseMatrix) -> Result<()> {
    match &mut adj[v.0] {
        Some(existing) => existing.axpy(1.0, &g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}
