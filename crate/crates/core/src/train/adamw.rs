//! AdamW with decoupled weight decay.

use serde::{Deserialize, Serialize};

use crate::encoder::Params;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamWConfig {
    pub fn new(learning_rate: f64, weight_decay: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState {
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamWState {
    pub fn new<P: Params>(params: &P) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|(_, t)| t.data.len()).collect();
        Self {
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }
}

pub fn adamw_step<P: Params>(params: &mut P, grads: &P, state: &mut AdamWState, cfg: &AdamWConfig) -> Result<()> {
    let grads = grads.tensors();
    if let Some((name, _)) = grads.iter().find(|(_, g)| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient of {name}")));
    }
    let mut tensors = params.tensors_mut();
    if tensors.len() != grads.len() || tensors.len() != state.m.len() {
        return Err(Error::invalid("parameter/gradient layout mismatch"));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let lr = cfg.learning_rate;
    for (k, ((name, p), (_, g))) in tensors.iter_mut().zip(&grads).enumerate() {
        if p.data.len() != g.data.len() {
            return Err(Error::invalid(format!("shape mismatch for {name}")));
        }
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for i in 0..p.data.len() {
            let gi = g.data[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            let w = p.data[i];
            p.data[i] = w - lr * cfg.weight_decay * w - lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Tensor;

    #[test]
    fn zero_grad_no_decay_is_identity() {
        let mut p = Tensor::from_vec(1, 3, vec![1.0, -2.0, 0.5]);
        let g = p.zeros_like();
        let mut s = AdamWState::new(&p);
        adamw_step(&mut p, &g, &mut s, &AdamWConfig::new(0.1, 0.0)).unwrap();
        assert_eq!(p.data, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_hand_value() {
        // m̂ = 1, v̂ = 1 after bias correction, so the step is lr / (1 + eps).
        let mut p = Tensor::from_vec(1, 1, vec![1.0]);
        let g = Tensor::from_vec(1, 1, vec![1.0]);
        let mut s = AdamWState::new(&p);
        adamw_step(&mut p, &g, &mut s, &AdamWConfig::new(0.1, 0.0)).unwrap();
        assert!((p.data[0] - (1.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-15);
        assert!((p.data[0] - 0.9).abs() < 1e-8);
    }

    #[test]
    fn decoupled_decay_on_zero_gradient() {
        let mut p = Tensor::from_vec(1, 2, vec![2.0, -4.0]);
        let g = p.zeros_like();
        let mut s = AdamWState::new(&p);
        let cfg = AdamWConfig::new(0.01, 0.1);
        adamw_step(&mut p, &g, &mut s, &cfg).unwrap();
        assert!((p.data[0] - (2.0 - 0.01 * 0.1 * 2.0)).abs() < 1e-15);
        assert!((p.data[1] - (-4.0 + 0.01 * 0.1 * 4.0)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = Tensor::zeros(1, 1);
        let g = Tensor::from_vec(1, 1, vec![f64::NAN]);
        let mut s = AdamWState::new(&p);
        let err = adamw_step(&mut p, &g, &mut s, &AdamWConfig::new(0.1, 0.0)).unwrap_err();
        assert!(err.to_string().contains("gradient of x"));
    }
}
