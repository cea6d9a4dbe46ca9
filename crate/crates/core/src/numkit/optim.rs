use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::DenseMatrix;

/// Named, ordered collection of learnable arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<DenseMatrix>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Appends a parameter and returns its slot index.
    pub fn push(&mut self, name: impl Into<String>, value: DenseMatrix) -> usize {
        self.names.push(name.into());
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, slot: usize) -> &DenseMatrix {
        &self.values[slot]
    }

    pub fn get_mut(&mut self, slot: usize) -> &mut DenseMatrix {
        &mut self.values[slot]
    }

    pub fn values(&self) -> &[DenseMatrix] {
        &self.values
    }

    pub fn slot_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(DenseMatrix::len).sum()
    }

    pub fn zeros_like(&self) -> Vec<DenseMatrix> {
        self.values
            .iter()
            .map(|v| DenseMatrix::zeros(v.rows(), v.cols()))
            .collect()
    }

    fn check_aligned(&self, grads: &[DenseMatrix]) -> Result<()> {
        if grads.len() != self.values.len() {
            return Err(Error::shape(format!(
                "{} gradients for {} parameters",
                grads.len(),
                self.values.len()
            )));
        }
        for ((name, p), g) in self.names.iter().zip(&self.values).zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::shape(format!(
                    "gradient for {name} is {:?}, parameter is {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
        }
        Ok(())
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            weight_decay: 1e-6,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// AdamW with decoupled weight decay and bias-corrected moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    m: Vec<DenseMatrix>,
    v: Vec<DenseMatrix>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, params: &ParamSet) -> Self {
        Self {
            config,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[DenseMatrix], &[DenseMatrix]) {
        (&self.m, &self.v)
    }

    pub fn from_parts(config: AdamWConfig, step: u64, m: Vec<DenseMatrix>, v: Vec<DenseMatrix>) -> Self {
        Self { config, step, m, v }
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &[DenseMatrix]) -> Result<()> {
        params.check_aligned(grads)?;
        if self.m.len() != params.len() {
            return Err(Error::shape("optimizer state does not match parameter set"));
        }
        self.step += 1;
        let AdamWConfig {
            lr,
            weight_decay,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (slot, g) in grads.iter().enumerate() {
            let p = params.get_mut(slot).data_mut();
            let m = self.m[slot].data_mut();
            let v = self.v[slot].data_mut();
            for k in 0..p.len() {
                p[k] *= 1.0 - lr * weight_decay;
                m[k] = beta1 * m[k] + (1.0 - beta1) * g.data()[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * g.data()[k] * g.data()[k];
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(values: &[f64]) -> ParamSet {
        let mut p = ParamSet::new();
        p.push("w", DenseMatrix::row_vector(values));
        p
    }

    #[test]
    fn zero_gradient_without_decay_is_noop() {
        let mut params = single(&[0.5, -1.0, 2.0]);
        let before = params.clone();
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut opt = AdamW::new(cfg, &params);
        opt.step(&mut params, &[DenseMatrix::zeros(1, 3)]).unwrap();
        assert_eq!(params, before);
    }

    #[test]
    fn first_step_moves_against_gradient() {
        let mut params = single(&[0.5, -1.0, 2.0]);
        let before = params.get(0).clone();
        let grad = DenseMatrix::row_vector(&[3.0, -0.2, 1e-3]);
        let mut opt = AdamW::new(AdamWConfig::default(), &params);
        opt.step(&mut params, &[grad.clone()]).unwrap();
        for k in 0..3 {
            let delta = params.get(0).data()[k] - before.data()[k];
            assert_eq!(delta.signum(), -grad.data()[k].signum());
        }
    }

    #[test]
    fn mismatched_gradients_are_rejected() {
        let mut params = single(&[1.0, 2.0]);
        let mut opt = AdamW::new(AdamWConfig::default(), &params);
        assert!(opt.step(&mut params, &[DenseMatrix::zeros(2, 1)]).is_err());
        assert!(opt.step(&mut params, &[]).is_err());
    }
}
