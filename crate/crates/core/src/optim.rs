//! Adam with bias correction over flat lists of parameter tensors.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// First/second moment accumulators plus hyperparameters for one parameter
/// group. The step counter strictly increases on every successful update.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(shapes: &[Vec<usize>], lr: f64) -> Self {
        AdamState {
            m: shapes.iter().map(|s| Tensor::zeros(s.clone())).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s.clone())).collect(),
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update. A non-finite gradient skips the update
    /// entirely (no parameter or moment mutation) and reports the offending
    /// tensor.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "adam over {} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for (i, g) in grads.iter().enumerate() {
            if g.shape() != params[i].shape() {
                return Err(Error::Shape(format!(
                    "grad {:?} vs param {:?}",
                    g.shape(),
                    params[i].shape()
                )));
            }
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient(format!(
                    "parameter tensor {i} received a non-finite gradient"
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((param, grad), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for ((p, &g), (mj, vj)) in param
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
            {
                *mj = self.beta1 * *mj + (1.0 - self.beta1) * g;
                *vj = self.beta2 * *vj + (1.0 - self.beta2) * g * g;
                let mhat = *mj / bc1;
                let vhat = *vj / bc2;
                *p -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
