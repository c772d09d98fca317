use super::RolloutBatch;

/// Backward GAE recursion over raw arrays. `ends[t]` stops the recursion
/// after `t`; `next_values[t]` is the value used for `s_{t+1}` at such a
/// step (ignored when `terminal[t]`).
pub fn gae_from(
    rewards: &[f64],
    values: &[f64],
    terminal: &[bool],
    ends: &[bool],
    next_values: &[f64],
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let next_v = if terminal[t] {
            0.0
        } else if ends[t] || t + 1 == n {
            next_values[t]
        } else {
            values[t + 1]
        };
        if ends[t] || t + 1 == n {
            running = 0.0;
        }
        let delta = rewards[t] + gamma * next_v - values[t];
        running = delta + gamma * lambda * running;
        adv[t] = running;
    }
    adv
}

/// Advantages of a collected batch.
pub fn compute_gae(batch: &RolloutBatch, gamma: f64, lambda: f64) -> Vec<f64> {
    let ends: Vec<bool> = (0..batch.len()).map(|t| batch.ends_segment(t)).collect();
    gae_from(
        &batch.rewards,
        &batch.values,
        &batch.terminal,
        &ends,
        &batch.bootstrap_values,
        gamma,
        lambda,
    )
}

/// `R̂_t = A_t + V(s_t)`.
pub fn compute_returns(batch: &RolloutBatch) -> Vec<f64> {
    batch.advantages.iter().zip(&batch.values).map(|(a, v)| a + v).collect()
}
