use super::layers::Param;
use super::Tensor;
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Adaptive-moment optimizer state for one parameter collection.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    pub first: Vec<Tensor>,
    pub second: Vec<Tensor>,
}

impl OptimizerState {
    /// Moments are allocated lazily on the first step.
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            epsilon: ADAM_EPSILON,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }
}

/// One Adam update of `params` from their accumulated gradients.
pub fn adam_step(params: &mut [&mut Param], state: &mut OptimizerState) -> Result<()> {
    if state.first.is_empty() && state.step == 0 {
        state.first = params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        state.second = state.first.clone();
    }
    if state.first.len() != params.len() {
        return Err(Error::shape(format!(
            "optimizer tracks {} tensors but {} parameters were given",
            state.first.len(),
            params.len()
        )));
    }
    for (i, p) in params.iter().enumerate() {
        if state.first[i].shape() != p.value.shape() || p.grad.shape() != p.value.shape() {
            return Err(Error::shape(format!("optimizer slot for `{}`", p.name)));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - state.beta1.powi(t);
    let bias2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, eps, lr) = (state.beta1, state.beta2, state.epsilon, state.learning_rate);
    for (i, p) in params.iter_mut().enumerate() {
        let m = state.first[i].data_mut();
        let v = state.second[i].data_mut();
        let g = p.grad.data();
        let w = p.value.data_mut();
        for j in 0..w.len() {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            let m_hat = m[j] / bias1;
            let v_hat = v[j] / bias2;
            w[j] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Rescales gradients so their joint L2 norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_grad_norm(params: &mut [&mut Param], max_norm: f64) -> f64 {
    let norm = params
        .iter()
        .map(|p| p.grad.data().iter().map(|g| g * g).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for p in params.iter_mut() {
            p.grad.data_mut().iter_mut().for_each(|g| *g *= scale);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(v: f64, g: f64) -> Param {
        Param {
            name: "p".into(),
            value: Tensor::scalar(v),
            grad: Tensor::scalar(g),
        }
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m = 0.1, v = 0.001, bias-corrected both to 1 → Δ = η·1/(1+ε)
        let mut p = scalar_param(0.0, 1.0);
        let mut st = OptimizerState::new(0.002);
        adam_step(&mut [&mut p], &mut st).unwrap();
        let expected = -0.002 / (1.0 + 1e-8);
        assert!((p.value.data()[0] - expected).abs() < 1e-15);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn zero_gradient_on_fresh_state_is_a_no_op() {
        let mut p = scalar_param(0.7, 0.0);
        let mut st = OptimizerState::new(0.002);
        adam_step(&mut [&mut p], &mut st).unwrap();
        assert_eq!(p.value.data()[0], 0.7);
        assert_eq!(st.first[0].data()[0], 0.0);
    }

    #[test]
    fn zero_gradient_decays_warm_moments() {
        let mut p = scalar_param(0.7, 0.5);
        let mut st = OptimizerState::new(0.002);
        adam_step(&mut [&mut p], &mut st).unwrap();
        let (m, v) = (st.first[0].data()[0], st.second[0].data()[0]);
        p.grad.fill(0.0);
        adam_step(&mut [&mut p], &mut st).unwrap();
        assert_eq!(st.first[0].data()[0], ADAM_BETA1 * m);
        assert_eq!(st.second[0].data()[0], ADAM_BETA2 * v);
    }

    #[test]
    fn identical_inputs_identical_outputs() {
        let run = || {
            let mut p = scalar_param(0.3, -0.25);
            let mut st = OptimizerState::new(0.002);
            for _ in 0..5 {
                adam_step(&mut [&mut p], &mut st).unwrap();
            }
            (p, st)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn clip_rescales_only_when_needed() {
        let mut a = scalar_param(0.0, 3.0);
        let mut b = scalar_param(0.0, 4.0);
        let n = clip_grad_norm(&mut [&mut a, &mut b], 1.0);
        assert_eq!(n, 5.0);
        assert!((a.grad.data()[0] - 0.6).abs() < 1e-15);
        let n = clip_grad_norm(&mut [&mut a, &mut b], 10.0);
        assert!((n - 1.0).abs() < 1e-15);
        assert!((b.grad.data()[0] - 0.8).abs() < 1e-15);
    }
}
