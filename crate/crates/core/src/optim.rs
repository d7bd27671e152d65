//! Adam optimizer with named per-parameter state.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::num::{real, Scalar};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    state: BTreeMap<String, (Tensor<T>, Tensor<T>)>, // first and second moments
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            state: BTreeMap::new(),
        }
    }

    pub fn lr(&self) -> f64 {
        self.config.lr
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Advance the shared step counter; call once before a round of
    /// `update` calls.
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    /// Apply one Adam update to a named parameter.
    pub fn update(&mut self, name: &str, value: &mut Tensor<T>, grad: &Tensor<T>) {
        let (m, v) = self
            .state
            .entry(name.to_string())
            .or_insert_with(|| (Tensor::zeros(grad.shape()), Tensor::zeros(grad.shape())));
        let b1 = real::<T>(self.config.beta1);
        let b2 = real::<T>(self.config.beta2);
        let one = T::one();
        let lr = real::<T>(self.config.lr);
        let eps = real::<T>(self.config.eps);
        let t = self.step.max(1) as i32;
        let corr1 = one - b1.powi(t);
        let corr2 = one - b2.powi(t);
        for ((mv, vv), (pv, &g)) in m
            .data_mut()
            .iter_mut()
            .zip(v.data_mut().iter_mut())
            .zip(value.data_mut().iter_mut().zip(grad.data().iter()))
        {
            *mv = b1 * *mv + (one - b1) * g;
            *vv = b2 * *vv + (one - b2) * g * g;
            let m_hat = *mv / corr1;
            let v_hat = *vv / corr2;
            *pv -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }

    /// Moment tensors plus the step counter, for checkpointing.
    pub fn export_state(&self) -> (u64, Vec<(String, Tensor<T>, Tensor<T>)>) {
        (
            self.step,
            self.state
                .iter()
                .map(|(k, (m, v))| (k.clone(), m.clone(), v.clone()))
                .collect(),
        )
    }

    pub fn import_state(&mut self, step: u64, entries: Vec<(String, Tensor<T>, Tensor<T>)>) {
        self.step = step;
        self.state = entries
            .into_iter()
            .map(|(k, m, v)| (k, (m, v)))
            .collect();
    }
}
