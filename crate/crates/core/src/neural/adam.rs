use serde::{Deserialize, Serialize};

use super::Scalar;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for a fixed, ordered list of parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, shapes: &[usize]) -> Self {
        Self {
            config,
            step: 0,
            m: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }

    pub fn lr(&self) -> f64 {
        self.config.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }
}

/// One bias-corrected Adam update of every parameter tensor.
pub fn adam_step<T: Scalar>(
    params: &mut [&mut [T]],
    grads: &[&[T]],
    state: &mut AdamState<T>,
) -> Result<()> {
    if params.len() != state.m.len() || grads.len() != state.m.len() {
        return Err(Error::shape(&[state.m.len()], &[params.len(), grads.len()]));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.len() != m.len() || g.len() != m.len() {
            return Err(Error::shape(&[m.len()], &[p.len(), g.len()]));
        }
    }

    state.step += 1;
    let cfg = state.config;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let (one_b1, one_b2) = (T::lit(1.0 - cfg.beta1), T::lit(1.0 - cfg.beta2));
    let (inv_bc1, inv_bc2) = (T::lit(1.0 / bc1), T::lit(1.0 / bc2));
    let (lr, eps) = (T::lit(cfg.lr), T::lit(cfg.eps));

    for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = &mut state.m[k];
        let v = &mut state.v[k];
        for j in 0..p.len() {
            let gj = g[j];
            m[j] = b1 * m[j] + one_b1 * gj;
            v[j] = b2 * v[j] + one_b2 * gj * gj;
            let m_hat = m[j] * inv_bc1;
            let v_hat = v[j] * inv_bc2;
            p[j] = p[j] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![0.3f64, -1.2];
        let g = [0.0f64; 2];
        let mut st = AdamState::new(AdamConfig::default(), &[2]);
        adam_step(&mut [&mut p[..]], &[&g[..]], &mut st).unwrap();
        assert_eq!(p, vec![0.3, -1.2]);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_closed_form() {
        let mut p = [0.0f64];
        let mut st = AdamState::new(AdamConfig::default(), &[1]);
        adam_step(&mut [&mut p[..]], &[&[1.0][..]], &mut st).unwrap();
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15, "{} vs {expected}", p[0]);
    }

    #[test]
    fn first_step_moves_against_sign() {
        let g = vec![5.0f64, -0.01, 1e-3, -200.0];
        let mut p = [0.0f64; 4];
        let mut st = AdamState::new(AdamConfig::default(), &[4]);
        adam_step(&mut [&mut p[..]], &[&g[..]], &mut st).unwrap();
        for (pj, gj) in p.iter().zip(&g) {
            assert_eq!(pj.signum(), -gj.signum());
            assert!((pj.abs() - 1e-3).abs() < 1e-8);
        }
    }

    #[test]
    fn shape_checks() {
        let mut p = [0.0f64; 2];
        let mut st = AdamState::new(AdamConfig::default(), &[3]);
        assert!(adam_step(&mut [&mut p[..]], &[&[0.0, 0.0][..]], &mut st).is_err());
    }
}
