//! Scalar loss and target formulas shared by the agents.

use crate::error::{Error, Result};

/// Mean squared Bellman error `mean((y - q)²)` and its gradient w.r.t. `q`.
pub fn mbse_loss(q: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>)> {
    if q.len() != y.len() || q.is_empty() {
        return Err(Error::shape(format!(
            "{} critic values for {} targets",
            q.len(),
            y.len()
        )));
    }
    let n = q.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(q.len());
    for (qi, yi) in q.iter().zip(y) {
        let e = qi - yi;
        loss += e * e;
        grad.push(2.0 * e / n);
    }
    Ok((loss / n, grad))
}

/// `r + γ(1 - d)·q_next`.
pub fn q_target(r: f64, done: bool, q_next: f64, gamma: f64) -> f64 {
    if done {
        r
    } else {
        r + gamma * q_next
    }
}

/// Twin-critic entropy-regularised target
/// `r + γ(1 - d)(min(q1, q2) - α·logπ(a'|s'))`.
pub fn sac_q_target(r: f64, done: bool, q1: f64, q2: f64, log_prob: f64, alpha: f64, gamma: f64) -> f64 {
    q_target(r, done, q1.min(q2) - alpha * log_prob, gamma)
}

/// Clipped advantage `(1 + ε)A` for `A > 0`, else `(1 - ε)A`.
pub fn clipped_advantage(advantage: f64, eps: f64) -> f64 {
    if advantage > 0.0 {
        (1.0 + eps) * advantage
    } else {
        (1.0 - eps) * advantage
    }
}

/// `min(r·A, g(ε, A))`.
pub fn ppo_surrogate(ratio: f64, advantage: f64, eps: f64) -> f64 {
    (ratio * advantage).min(clipped_advantage(advantage, eps))
}

/// Derivative of [`ppo_surrogate`] w.r.t. the ratio: `A` while the unclipped
/// term is the minimum, else 0.
pub fn ppo_surrogate_grad(ratio: f64, advantage: f64, eps: f64) -> f64 {
    if ratio * advantage <= clipped_advantage(advantage, eps) {
        advantage
    } else {
        0.0
    }
}

/// Zero-mean, unit-variance rescaling; a constant input maps to zeros.
/// Mean and population standard deviation; `(0, 0)` for an empty slice.
pub fn moments(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn normalize(values: &mut [f64]) {
    if values.is_empty() {
        return;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let scale = if var > 1e-16 { var.sqrt().recip() } else { 0.0 };
    values.iter_mut().for_each(|v| *v = (*v - mean) * scale);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn surrogate_branches() {
        assert_eq!(ppo_surrogate(1.0, -3.0, 0.2), -3.0);
        assert_eq!(ppo_surrogate(2.0, 1.0, 0.2), 1.2);
        assert_eq!(ppo_surrogate(0.5, -1.0, 0.2), -0.8);
        assert_eq!(ppo_surrogate_grad(2.0, 1.0, 0.2), 0.0);
        assert_eq!(ppo_surrogate_grad(1.1, 1.0, 0.2), 1.0);
    }

    #[test]
    fn normalize_moments() {
        let mut v = vec![1.0, 2.0, 3.0, 6.0];
        normalize(&mut v);
        let mean = v.iter().sum::<f64>() / 4.0;
        let var = v.iter().map(|x| x * x).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        let mut c = vec![2.0; 3];
        normalize(&mut c);
        assert_eq!(c, vec![0.0; 3]);
    }
}
