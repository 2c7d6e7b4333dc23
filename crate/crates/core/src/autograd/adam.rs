use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment buffers for every parameter of one store.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamStore, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = params.ids().map(|id| vec![0.0; params.get(id).numel()]).collect();
        AdamState {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update using the gradients stored on `params`.
    /// Parameters without a gradient are treated as having a zero gradient.
    pub fn step(&mut self, params: &mut ParamStore) {
        self.step += 1;
        let t = self.step as i32;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let ids: Vec<_> = params.ids().collect();
        for (k, id) in ids.into_iter().enumerate() {
            let p = params.get_mut(id);
            let grad = p.grad().map(<[f64]>::to_vec);
            let m = &mut self.first[k];
            let v = &mut self.second[k];
            for (i, w) in p.data_mut().iter_mut().enumerate() {
                let g = grad.as_ref().map_or(0.0, |g| g[i]);
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                *w -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
            }
        }
    }

    pub fn first_moment(&self, index: usize) -> &[f64] {
        &self.first[index]
    }

    pub fn second_moment(&self, index: usize) -> &[f64] {
        &self.second[index]
    }

    /// Moment buffers as named tensors for checkpointing.
    pub fn export(&self, params: &ParamStore) -> Vec<(String, Tensor)> {
        let mut out = vec![("adam.step".to_string(), Tensor::scalar(self.step as f64))];
        for (k, id) in params.ids().enumerate() {
            let shape = params.get(id).shape().to_vec();
            let name = params.name(id);
            out.push((
                format!("adam.m.{name}"),
                Tensor::new(shape.clone(), self.first[k].clone()).expect("moment shape"),
            ));
            out.push((
                format!("adam.v.{name}"),
                Tensor::new(shape, self.second[k].clone()).expect("moment shape"),
            ));
        }
        out
    }

    pub fn import(
        params: &ParamStore,
        config: AdamConfig,
        entries: &[(String, Tensor)],
    ) -> Result<Self> {
        let find = |name: &str| {
            entries
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t)
                .ok_or_else(|| Error::parse("checkpoint", format!("missing {name}")))
        };
        let mut state = AdamState::new(params, config);
        state.step = find("adam.step")?.item() as u64;
        for (k, id) in params.ids().enumerate() {
            let name = params.name(id);
            for (prefix, buf) in [("m", &mut state.first[k]), ("v", &mut state.second[k])] {
                let t = find(&format!("adam.{prefix}.{name}"))?;
                if t.numel() != buf.len() {
                    return Err(Error::parse("checkpoint", format!("moment size for {name}")));
                }
                buf.copy_from_slice(t.data());
            }
        }
        Ok(state)
    }
}
