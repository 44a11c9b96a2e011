/// Generalized advantage estimation over one trajectory segment.
///
/// `dones[t]` marks a transition that ended its episode: nothing after it is
/// bootstrapped or propagated back across it. `last_value` bootstraps the
/// step after the segment when the final transition is not terminal.
///
/// Returns `(advantages, returns)` with `returns = advantages + values`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(rewards.len(), values.len(), "rewards and values differ in length");
    assert_eq!(rewards.len(), dones.len(), "rewards and dones differ in length");
    let n = rewards.len();
    let mut advantages = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = last_value;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * live * next_value - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        advantages[t] = next_adv;
        next_value = values[t];
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    (advantages, returns)
}
