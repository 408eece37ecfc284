//! Bias-corrected Adam over a flat list of parameter tensors.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments per parameter, plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn zeros_like<'a>(params: impl IntoIterator<Item = &'a Tensor<T>>) -> Self {
        let m: Vec<Tensor<T>> = params
            .into_iter()
            .map(|p| Tensor::zeros(p.rows(), p.cols()))
            .collect();
        Self {
            v: m.clone(),
            m,
            t: 0,
        }
    }

    /// One update of every parameter from its gradient.
    pub fn step(
        &mut self,
        cfg: &AdamConfig,
        params: &mut [&mut Tensor<T>],
        grads: &[Tensor<T>],
    ) -> Result<(), TensorError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(TensorError::BadLength {
                rows: self.m.len(),
                cols: 1,
                len: params.len().min(grads.len()),
            });
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(TensorError::ShapeMismatch {
                    op: "adam",
                    lhs: p.shape(),
                    rhs: g.shape(),
                });
            }
        }
        self.t += 1;
        let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
        let one = T::one();
        let c1 = one - T::of(cfg.beta1.powi(self.t as i32));
        let c2 = one - T::of(cfg.beta2.powi(self.t as i32));
        let (lr, eps) = (T::of(cfg.lr), T::of(cfg.eps));
        for (k, p) in params.iter_mut().enumerate() {
            let g = grads[k].data();
            let m = self.m[k].data_mut();
            let v = self.v[k].data_mut();
            for (idx, w) in p.data_mut().iter_mut().enumerate() {
                m[idx] = b1 * m[idx] + (one - b1) * g[idx];
                v[idx] = b2 * v[idx] + (one - b2) * g[idx] * g[idx];
                let m_hat = m[idx] / c1;
                let v_hat = v[idx] / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
