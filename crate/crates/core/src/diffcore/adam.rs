//! Adaptive-moment optimizer.

use super::mlp::ParamArray;
use super::tensor::Tensor;
use crate::{Error, Result};

/// Default learning rate for VdR fitting.
pub const DEFAULT_LEARNING_RATE: f64 = 2e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: DEFAULT_LEARNING_RATE,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer state for an ordered list of parameter arrays.
///
/// Moments start at zero; the step counter starts at zero and is incremented
/// before the bias correction of each step.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Adam {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a ParamArray>) -> Self {
        let (first, second) = params
            .into_iter()
            .map(|p| (Tensor::zeros(p.shape()), Tensor::zeros(p.shape())))
            .unzip();
        Adam {
            config,
            step: 0,
            first,
            second,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    /// Changes the step size for subsequent updates; moments are kept.
    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update from each parameter's `grad`, then zeroes the grads.
    ///
    /// Non-finite gradients abort the step before any state is touched.
    pub fn step(&mut self, params: &mut [&mut ParamArray]) -> Result<()> {
        if params.len() != self.first.len() {
            return Err(Error::invalid(
                "adam_step",
                format!("optimizer tracks {} arrays, got {}", self.first.len(), params.len()),
            ));
        }
        for (p, m) in params.iter().zip(&self.first) {
            p.grad.expect_shape("adam_step", m.shape())?;
            if !p.grad.is_finite() {
                return Err(Error::NonFinite("adam_step: gradient"));
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            let ParamArray { value, grad } = &mut **p;
            for (((x, &g), mi), vi) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = beta1 * *mi + (1.0 - beta1) * g;
                *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *x -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            grad.fill(0.0);
        }
        Ok(())
    }
}
