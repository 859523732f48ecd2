use serde::{Deserialize, Serialize};

use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, eps_hat: 1e-8 }
    }
}

/// Optimizer state; moments are allocated to match the parameters.
#[derive(Clone, Debug)]
pub struct AdamState<T: Real> {
    pub config: AdamConfig,
    pub step_count: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Tensor<T>>) -> Self {
        let m: Vec<Tensor<T>> = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self { config, step_count: 0, v: m.clone(), m }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step<T: Real>(state: &mut AdamState<T>, params: &mut [&mut Tensor<T>], grads: &[&Tensor<T>]) -> Result<()> {
    if params.len() != state.m.len() || grads.len() != params.len() {
        return Err(Error::ShapeMismatch(format!(
            "adam: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::ShapeMismatch(format!("adam: param {:?}, grad {:?}", p.shape(), g.shape())));
        }
    }
    state.step_count += 1;
    let cfg = state.config;
    let t = state.step_count as i32;
    let c1 = T::from_f64_lossy(1.0 - cfg.beta1.powi(t));
    let c2 = T::from_f64_lossy(1.0 - cfg.beta2.powi(t));
    let (b1, b2) = (T::from_f64_lossy(cfg.beta1), T::from_f64_lossy(cfg.beta2));
    let (lr, eps) = (T::from_f64_lossy(cfg.learning_rate), T::from_f64_lossy(cfg.eps_hat));
    let one = T::one();
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        let it = p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut());
        for (((pv, &gv), mv), vv) in it {
            *mv = b1 * *mv + (one - b1) * gv;
            *vv = b2 * *vv + (one - b2) * gv * gv;
            let mhat = *mv / c1;
            let vhat = *vv / c2;
            *pv = *pv - lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor<f64> {
        Tensor::from_vec(vec![1], vec![v]).unwrap()
    }

    #[test]
    fn zero_gradient_is_a_null_update() {
        let mut p = Tensor::from_vec(vec![2], vec![1.5, -2.0]).unwrap();
        let mut st = AdamState::new(AdamConfig::default(), [&p]);
        let g = Tensor::zeros(&[2]);
        adam_step(&mut st, &mut [&mut p], &[&g]).unwrap();
        assert_eq!(p.data(), &[1.5, -2.0]);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn first_step_matches_hand_evaluation() {
        let cfg = AdamConfig::default();
        for g0 in [0.3, -2.5, 1e-3] {
            let mut p = scalar(1.0);
            let mut st = AdamState::new(cfg, [&p]);
            adam_step(&mut st, &mut [&mut p], &[&scalar(g0)]).unwrap();
            // m_hat = g, v_hat = g^2 after bias correction
            let expected = 1.0 - cfg.learning_rate * g0 / (g0.abs() + cfg.eps_hat);
            assert!((p.data()[0] - expected).abs() < 1e-15, "g = {g0}");
        }
    }

    #[test]
    fn converges_on_a_parabola() {
        let cfg = AdamConfig { learning_rate: 0.1, ..AdamConfig::default() };
        let mut x = scalar(5.0);
        let mut st = AdamState::new(cfg, [&x]);
        for _ in 0..200 {
            let g = scalar(2.0 * x.data()[0]);
            adam_step(&mut st, &mut [&mut x], &[&g]).unwrap();
        }
        assert!(x.data()[0].abs() < 0.1, "x = {}", x.data()[0]);
        assert_eq!(st.step_count, 200);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = scalar(1.0);
        let mut st = AdamState::new(AdamConfig::default(), [&p]);
        let g = Tensor::zeros(&[2]);
        assert!(adam_step(&mut st, &mut [&mut p], &[&g]).is_err());
        assert_eq!(st.step_count, 0);
    }
}
