//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{AutodiffError, Result};
use crate::params::{ParamGrads, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const DEFAULT_LEARNING_RATE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AdamState<S: Scalar> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    first: Vec<Tensor<S>>,
    second: Vec<Tensor<S>>,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(store: &ParamStore<S>, learning_rate: f64) -> Self {
        let zeros: Vec<Tensor<S>> = store
            .iter()
            .map(|(_, t)| Tensor::zeros(t.rows(), t.cols()))
            .collect();
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn first_moments(&self) -> &[Tensor<S>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Tensor<S>] {
        &self.second
    }
}

/// One Adam update of `store` in place.
pub fn adam_step<S: Scalar>(
    store: &mut ParamStore<S>,
    grads: &ParamGrads<S>,
    state: &mut AdamState<S>,
) -> Result<()> {
    if grads.len() != store.len() || state.first.len() != store.len() {
        return Err(AutodiffError::InvalidUse(format!(
            "adam: {} parameters, {} gradients, {} moment slots",
            store.len(),
            grads.len(),
            state.first.len()
        ))
        .into());
    }
    for i in 0..store.len() {
        let (p, g, m) = (store.get(i), grads.tensor(i), &state.first[i]);
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(AutodiffError::Shape {
                op: "adam_step",
                lhs: p.shape(),
                rhs: g.shape(),
            }
            .into());
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (S::lit(state.beta1), S::lit(state.beta2));
    let c1 = S::lit(1.0 - state.beta1.powi(t));
    let c2 = S::lit(1.0 - state.beta2.powi(t));
    let lr = S::lit(state.learning_rate);
    let eps = S::lit(state.eps);
    let one = S::one();
    for i in 0..store.len() {
        let g = grads.tensor(i).data();
        let m = state.first[i].data_mut();
        let v = state.second[i].data_mut();
        let p = store.get_mut(i).data_mut();
        for k in 0..p.len() {
            m[k] = b1 * m[k] + (one - b1) * g[k];
            v[k] = b2 * v[k] + (one - b2) * g[k] * g[k];
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
