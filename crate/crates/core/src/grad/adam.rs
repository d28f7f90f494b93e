use alloc::format;
use alloc::vec::Vec;

use super::{ParamSet, Tensor};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moments for one [`ParamSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet, config: AdamConfig) -> Self {
        let zeros: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        AdamState {
            config,
            first_moment: zeros.clone(),
            second_moment: zeros,
            step_count: 0,
        }
    }

    /// One bias-corrected Adam step, `p -= lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn apply(&mut self, params: &mut ParamSet, grads: &[Tensor]) -> Result<()> {
        if grads.len() != params.len() || self.first_moment.len() != params.len() {
            return Err(Error::shape(format!(
                "adam: {} params, {} grads, {} moments",
                params.len(),
                grads.len(),
                self.first_moment.len()
            )));
        }
        for (i, g) in grads.iter().enumerate() {
            if g.shape() != params.get(i).shape() || self.first_moment[i].shape() != g.shape() {
                return Err(Error::shape(format!("adam: gradient {i} shape {:?}", g.shape())));
            }
        }
        self.step_count += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step_count as f64;
        let c1 = 1.0 - libm::pow(beta1, t);
        let c2 = 1.0 - libm::pow(beta2, t);
        for (i, p) in params.tensors_mut().iter_mut().enumerate() {
            let m = self.first_moment[i].data_mut();
            let v = self.second_moment[i].data_mut();
            for (((p, &g), m), v) in p.data_mut().iter_mut().zip(grads[i].data()).zip(m).zip(v) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (libm::sqrt(v_hat) + epsilon);
            }
        }
        Ok(())
    }
}
