//! Independent reference computations shared by the integration tests and
//! the acceptance runner. Nothing here calls the code paths it checks.

#![allow(dead_code)]

use airctl::explain::DeterministicPolicy;
use airctl::policy::{deterministic_action, PolicyParams, HIDDEN};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Tank pressure trajectory written out from `p' = p + (Q_in - Q_out) dt p / V`.
pub fn resimulate_pressure(p0: f64, supplied: &[f64], demand: &[f64], volume: f64, dt: f64) -> Vec<f64> {
    let mut p = p0;
    supplied
        .iter()
        .zip(demand)
        .map(|(q_in, q_out)| {
            p *= 1.0 + (q_in - q_out) * dt / volume;
            p
        })
        .collect()
}

/// Advantages from the telescoped sum `A_t = sum_l (gamma lambda)^l delta_{t+l}`
/// for a single episode that terminates at its last step.
pub fn telescoped_gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    let n = rewards.len();
    let delta: Vec<f64> = (0..n)
        .map(|t| {
            let next = if t + 1 < n { values[t + 1] } else { 0.0 };
            rewards[t] + gamma * next - values[t]
        })
        .collect();
    (0..n)
        .map(|t| (t..n).map(|k| (gamma * lambda).powi((k - t) as i32) * delta[k]).sum())
        .collect()
}

/// Discounted Monte-Carlo return minus the value baseline.
pub fn monte_carlo_advantage(rewards: &[f64], values: &[f64], gamma: f64) -> Vec<f64> {
    (0..rewards.len())
        .map(|t| (t..rewards.len()).map(|k| gamma.powi((k - t) as i32) * rewards[k]).sum::<f64>() - values[t])
        .collect()
}

fn heap_permutations(items: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == 1 {
        out.push(items.clone());
        return;
    }
    for i in 0..k {
        heap_permutations(items, k - 1, out);
        let j = if k % 2 == 0 { i } else { 0 };
        items.swap(j, k - 1);
    }
}

/// Shapley values by averaging marginal contributions over all `F!`
/// orderings, with the interventional value function evaluated row by row.
pub fn shapley_by_orderings(f: &dyn Fn(&[f64]) -> f64, x: &[f64], background: &Array2<f64>) -> Vec<f64> {
    let n = x.len();
    let value = |mask: &[bool]| {
        let total: f64 = background
            .rows()
            .into_iter()
            .map(|z| {
                let row: Vec<f64> = (0..n).map(|j| if mask[j] { x[j] } else { z[j] }).collect();
                f(&row)
            })
            .sum();
        total / background.nrows() as f64
    };
    let mut orderings = Vec::new();
    heap_permutations(&mut (0..n).collect(), n, &mut orderings);
    let mut phi = vec![0.0; n];
    for order in &orderings {
        let mut mask = vec![false; n];
        let mut before = value(&mask);
        for &j in order {
            mask[j] = true;
            let after = value(&mask);
            phi[j] += after - before;
            before = after;
        }
    }
    phi.iter().map(|p| p / orderings.len() as f64).collect()
}

/// Summed deterministic setpoint of a network, one state at a time.
pub fn summed_action(params: &PolicyParams, x: &[f64]) -> f64 {
    deterministic_action(params, x).unwrap().iter().sum()
}

/// Central finite-difference gradient of the summed setpoint.
pub fn fd_input_gradient(params: &PolicyParams, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|j| {
            let mut plus = x.to_vec();
            let mut minus = x.to_vec();
            plus[j] += h;
            minus[j] -= h;
            (summed_action(params, &plus) - summed_action(params, &minus)) / (2.0 * h)
        })
        .collect()
}

/// Relative error with an absolute floor so coordinates near zero are
/// judged on absolute accuracy.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Random network with an action head large enough that setpoints vary
/// visibly across the input space.
pub fn random_network(obs_dim: usize, act_dim: usize, hidden: usize, seed: u64) -> PolicyParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = PolicyParams::init(obs_dim, act_dim, hidden, &mut rng);
    let normal = Normal::new(0.0, 1.5 / (hidden as f64).sqrt()).unwrap();
    p.w_mu.mapv_inplace(|_| normal.sample(&mut rng));
    p.b_mu.mapv_inplace(|_| rng.random_range(-0.3..0.3));
    p
}

pub fn default_network(obs_dim: usize, act_dim: usize, seed: u64) -> PolicyParams {
    random_network(obs_dim, act_dim, HIDDEN, seed)
}

/// Sample correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Average ranks, ties sharing the mean rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (Pearson on average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}

/// Index of the largest entry.
pub fn argmax(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |best, i| if v[i] > v[best] { i } else { best })
}

/// Background whose columns `j` and `k` are exchangeable: every row appears
/// together with its `j`/`k`-swapped copy.
pub fn symmetrized(background: &Array2<f64>, j: usize, k: usize) -> Array2<f64> {
    let (n, f) = background.dim();
    Array2::from_shape_fn((2 * n, f), |(r, c)| {
        let src = background.row(r % n);
        if r < n {
            src[c]
        } else if c == j {
            src[k]
        } else if c == k {
            src[j]
        } else {
            src[c]
        }
    })
}

/// Reference model wrapping a closure, with a finite-difference gradient.
pub struct FnPolicy<F: Fn(&[f64]) -> f64 + Sync> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> DeterministicPolicy for FnPolicy<F> {
    fn obs_dim(&self) -> usize {
        self.dim
    }

    fn act_dim(&self) -> usize {
        1
    }

    fn actions(&self, states: ndarray::ArrayView2<f64>) -> Array2<f64> {
        let out: Array1<f64> = states.rows().into_iter().map(|r| (self.f)(&r.to_vec())).collect();
        out.insert_axis(ndarray::Axis(1))
    }

    fn summed_action_gradients(&self, states: ndarray::ArrayView2<f64>) -> Array2<f64> {
        let h = 1e-6;
        Array2::from_shape_fn(states.dim(), |(i, j)| {
            let mut plus = states.row(i).to_vec();
            let mut minus = plus.clone();
            plus[j] += h;
            minus[j] -= h;
            ((self.f)(&plus) - (self.f)(&minus)) / (2.0 * h)
        })
    }
}

#[cfg(test)]
mod tests {
    #[allow(unused_imports)]
    use super::*;

    #[test]
    fn spearman_of_monotone_map_is_one() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((spearman(&x, &[0.1, 0.5, 0.6, 9.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &[4.0, 3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn ordering_count() {
        let mut out = Vec::new();
        heap_permutations(&mut (0..4).collect(), 4, &mut out);
        out.sort();
        out.dedup();
        assert_eq!(out.len(), 24);
    }
}
