use crate::error::{Error, Result};

/// Generalized advantage estimates by backward recursion. `values` carries
/// one bootstrap entry past the last reward; `dones[t]` cuts the recursion
/// and masks `values[t + 1]`.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> Result<Vec<f64>> {
    let n = rewards.len();
    if values.len() != n + 1 || dones.len() != n {
        return Err(Error::shape(format!(
            "gae needs {n} dones and {} values, got {} and {}",
            n + 1,
            dones.len(),
            values.len()
        )));
    }
    let mut adv = vec![0.0; n];
    let mut next = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * live * values[t + 1] - values[t];
        next = delta + gamma * lambda * live * next;
        adv[t] = next;
    }
    Ok(adv)
}

/// Advantages plus value targets `A + V`.
pub fn gae_returns(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let adv = gae(rewards, values, dones, gamma, lambda)?;
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, ret))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_step_example() {
        let a = gae(&[1.0, 0.0], &[0.5, 0.25, 0.0], &[false, false], 0.9, 0.5).unwrap();
        assert!((a[0] - 0.6125).abs() < 1e-12);
        assert!((a[1] + 0.25).abs() < 1e-12);
    }

    #[test]
    fn terminal_cuts_bootstrap() {
        let a = gae(&[1.0, 2.0], &[0.0, 10.0, 10.0], &[true, true], 0.9, 0.9).unwrap();
        assert_eq!(a, vec![1.0, 2.0 - 10.0]);
        assert!(gae(&[1.0], &[0.0], &[false], 0.9, 0.9).is_err());
    }
}
