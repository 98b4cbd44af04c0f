//! Adam optimizer with bias correction.

use super::Tensor;
use crate::error::{Error, Result};

/// Per-parameter first/second moment accumulators plus hyperparameters.
///
/// Defaults: lr 1e-3, beta1 0.9, beta2 0.999, epsilon 1e-8.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &[Tensor], lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.numel()]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over the same parameter list the state was built with.
    /// Parameters without a populated gradient are treated as zero-gradient.
    pub fn update(&mut self, params: &[Tensor]) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::Parameter(format!(
                "adam state tracks {} parameters, got {}",
                self.m.len(),
                params.len()
            )));
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (idx, p) in params.iter().enumerate() {
            if p.numel() != self.m[idx].len() {
                return Err(Error::ShapeMismatch {
                    op: "adam_step",
                    lhs: p.shape(),
                    rhs: vec![self.m[idx].len()],
                });
            }
            let grad = p.grad().unwrap_or_else(|| vec![0.0; p.numel()]);
            let mut data = p.value();
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            for i in 0..data.len() {
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                data[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
            p.set_data(data)?;
        }
        Ok(())
    }
}
