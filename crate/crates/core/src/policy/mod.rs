//! Recurrent actor-critic network.
//!
//! Two fully connected tanh layers (128 wide) feed an LSTM cell whose
//! hidden output drives both heads:
//!
//! ```text
//! obs -> fc1 -> tanh -> fc2 -> tanh -> LSTM -> { action mean head, value head }
//! ```
//!
//! The action distribution is a squashed Gaussian: a pre-squash sample
//! `u ~ N(mu, exp(log_std))` maps to the setpoint `(tanh(u) + 1) / 2`.
//! `log_std` is state independent. Deterministic evaluation returns the
//! squashed mean.
//!
//! Gradients are computed by hand; the architecture is fixed, so a general
//! autodiff engine is not needed. Row-vector convention throughout:
//! `y = x W + b` with inputs stacked as rows.

mod io;

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_params, save_params, ParamFileHeader, PARAM_FORMAT_VERSION};

/// Width of both fully connected layers and of the LSTM state.
pub const HIDDEN: usize = 128;

/// Initial value of the state-independent log standard deviation.
pub const INITIAL_LOG_STD: f64 = 0.0;

/// Weights of the actor-critic network.
///
/// The same struct doubles as a gradient accumulator and as optimizer
/// moment storage, since all three share shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    /// Input-to-gates weights, gate blocks ordered input, forget, cell, output.
    pub lstm_wx: Array2<f64>,
    /// Hidden-to-gates weights, same block order.
    pub lstm_wh: Array2<f64>,
    pub lstm_b: Array1<f64>,
    pub w_mu: Array2<f64>,
    pub b_mu: Array1<f64>,
    pub log_std: Array1<f64>,
    pub w_v: Array2<f64>,
    pub b_v: Array1<f64>,
    /// Fixed input standardization `(x - input_shift) * input_gain`, applied
    /// before the first layer. Not trained.
    pub input_shift: Array1<f64>,
    pub input_gain: Array1<f64>,
}

/// Tensors updated by the optimizer come first; the rest are fixed.
pub const TRAINABLE_TENSORS: usize = 12;

pub(crate) const TENSOR_NAMES: [&str; 14] = [
    "fc1.weight",
    "fc1.bias",
    "fc2.weight",
    "fc2.bias",
    "lstm.weight_input",
    "lstm.weight_hidden",
    "lstm.bias",
    "action_head.weight",
    "action_head.bias",
    "log_std",
    "value_head.weight",
    "value_head.bias",
    "input.shift",
    "input.gain",
];

impl PolicyParams {
    pub fn zeros(obs_dim: usize, act_dim: usize, hidden: usize) -> Self {
        Self {
            w1: Array2::zeros((obs_dim, hidden)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((hidden, hidden)),
            b2: Array1::zeros(hidden),
            lstm_wx: Array2::zeros((hidden, 4 * hidden)),
            lstm_wh: Array2::zeros((hidden, 4 * hidden)),
            lstm_b: Array1::zeros(4 * hidden),
            w_mu: Array2::zeros((hidden, act_dim)),
            b_mu: Array1::zeros(act_dim),
            log_std: Array1::zeros(act_dim),
            w_v: Array2::zeros((hidden, 1)),
            b_v: Array1::zeros(1),
            input_shift: Array1::zeros(obs_dim),
            input_gain: Array1::ones(obs_dim),
        }
    }

    /// Sets the fixed input standardization.
    pub fn with_input_normalization(mut self, shift: &[f64], gain: &[f64]) -> Result<Self> {
        let d = self.obs_dim();
        for (what, v) in [("input shift", shift), ("input gain", gain)] {
            if v.len() != d {
                return Err(Error::Shape { what: what.into(), expected: d, actual: v.len() });
            }
        }
        if gain.iter().any(|g| !(g.is_finite() && *g != 0.0)) {
            return Err(Error::Config(format!("input gains must be finite and non-zero, got {gain:?}")));
        }
        self.input_shift = Array1::from(shift.to_vec());
        self.input_gain = Array1::from(gain.to_vec());
        Ok(self)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.obs_dim(), self.act_dim(), self.hidden())
    }

    /// Random initialization: scaled Gaussian fully connected layers,
    /// uniform LSTM weights with forget-gate bias 1, near-zero action head.
    pub fn init<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(obs_dim, act_dim, hidden);
        let mut gaussian = |a: &mut Array2<f64>, std: f64| {
            let normal = Normal::new(0.0, std).expect("positive std");
            a.mapv_inplace(|_| normal.sample(rng));
        };
        gaussian(&mut p.w1, 1.0 / (obs_dim as f64).sqrt());
        gaussian(&mut p.w2, 1.0 / (hidden as f64).sqrt());
        gaussian(&mut p.w_mu, 0.01 / (hidden as f64).sqrt());
        gaussian(&mut p.w_v, 1.0 / (hidden as f64).sqrt());
        let bound = 1.0 / (hidden as f64).sqrt();
        let uniform = Uniform::new_inclusive(-bound, bound).expect("valid bounds");
        p.lstm_wx.mapv_inplace(|_| uniform.sample(rng));
        p.lstm_wh.mapv_inplace(|_| uniform.sample(rng));
        p.lstm_b.slice_mut(s![hidden..2 * hidden]).fill(1.0);
        p.log_std.fill(INITIAL_LOG_STD);
        p
    }

    pub fn obs_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn act_dim(&self) -> usize {
        self.w_mu.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.ncols()
    }

    /// Shapes in `TENSOR_NAMES` order.
    pub fn shapes(&self) -> Vec<Vec<usize>> {
        vec![
            self.w1.shape().to_vec(),
            self.b1.shape().to_vec(),
            self.w2.shape().to_vec(),
            self.b2.shape().to_vec(),
            self.lstm_wx.shape().to_vec(),
            self.lstm_wh.shape().to_vec(),
            self.lstm_b.shape().to_vec(),
            self.w_mu.shape().to_vec(),
            self.b_mu.shape().to_vec(),
            self.log_std.shape().to_vec(),
            self.w_v.shape().to_vec(),
            self.b_v.shape().to_vec(),
            self.input_shift.shape().to_vec(),
            self.input_gain.shape().to_vec(),
        ]
    }

    /// Flat views in `TENSOR_NAMES` order.
    pub fn slices(&self) -> [&[f64]; 14] {
        fn flat<D: ndarray::Dimension>(a: &ndarray::Array<f64, D>) -> &[f64] {
            a.as_slice().expect("parameters are kept in standard layout")
        }
        [
            flat(&self.w1),
            flat(&self.b1),
            flat(&self.w2),
            flat(&self.b2),
            flat(&self.lstm_wx),
            flat(&self.lstm_wh),
            flat(&self.lstm_b),
            flat(&self.w_mu),
            flat(&self.b_mu),
            flat(&self.log_std),
            flat(&self.w_v),
            flat(&self.b_v),
            flat(&self.input_shift),
            flat(&self.input_gain),
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 14] {
        fn flat<D: ndarray::Dimension>(a: &mut ndarray::Array<f64, D>) -> &mut [f64] {
            a.as_slice_mut().expect("parameters are kept in standard layout")
        }
        [
            flat(&mut self.w1),
            flat(&mut self.b1),
            flat(&mut self.w2),
            flat(&mut self.b2),
            flat(&mut self.lstm_wx),
            flat(&mut self.lstm_wh),
            flat(&mut self.lstm_b),
            flat(&mut self.w_mu),
            flat(&mut self.b_mu),
            flat(&mut self.log_std),
            flat(&mut self.w_v),
            flat(&mut self.b_v),
            flat(&mut self.input_shift),
            flat(&mut self.input_gain),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// Consistency with an observation width and action width.
    pub fn check_dims(&self, obs_dim: usize, act_dim: usize) -> Result<()> {
        if self.obs_dim() != obs_dim {
            return Err(Error::Shape { what: "policy input".into(), expected: obs_dim, actual: self.obs_dim() });
        }
        if self.act_dim() != act_dim {
            return Err(Error::Shape { what: "policy output".into(), expected: act_dim, actual: self.act_dim() });
        }
        Ok(())
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Self, scale: f64) {
        for (dst, src) in self.slices_mut().into_iter().zip(other.slices()) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += scale * s);
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.slices().iter().flat_map(|s| s.iter()).map(|v| v * v).sum()
    }
}

/// LSTM hidden and cell vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState {
    pub h: Array1<f64>,
    pub c: Array1<f64>,
}

impl RecurrentState {
    pub fn zeros(hidden: usize) -> Self {
        Self { h: Array1::zeros(hidden), c: Array1::zeros(hidden) }
    }
}

/// Output of a single forward step.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    /// Squashed mean setpoints in `[0, 1]`.
    pub action_mean: Vec<f64>,
    /// Pre-squash Gaussian mean.
    pub mu: Vec<f64>,
    pub log_std: Vec<f64>,
    pub value: f64,
    pub next: RecurrentState,
}

/// Maps a pre-squash value to a setpoint in `[0, 1]`.
pub fn squash(u: f64) -> f64 {
    0.5 * (u.tanh() + 1.0)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Activations of one timestep, kept for the backward pass.
#[derive(Debug, Clone)]
struct StepCache {
    x: Array2<f64>,
    h1: Array2<f64>,
    h2: Array2<f64>,
    h_prev: Array2<f64>,
    c_prev: Array2<f64>,
    i: Array2<f64>,
    f: Array2<f64>,
    g: Array2<f64>,
    o: Array2<f64>,
    tanh_c: Array2<f64>,
    h: Array2<f64>,
    /// Rows whose recurrent state was zeroed before this step.
    reset: Vec<bool>,
}

/// Forward activations of a batch of sequences.
#[derive(Debug, Clone)]
pub struct SequenceCache {
    steps: Vec<StepCache>,
}

/// Outputs of a batched sequence forward pass.
#[derive(Debug, Clone)]
pub struct SequenceOutput {
    /// Pre-squash means per timestep, each `batch x act_dim`.
    pub mu: Vec<Array2<f64>>,
    /// Value estimates per timestep, each of length `batch`.
    pub value: Vec<Array1<f64>>,
    pub h_last: Array2<f64>,
    pub c_last: Array2<f64>,
}

impl PolicyParams {
    fn step_forward(
        &self,
        x: Array2<f64>,
        mut h_prev: Array2<f64>,
        mut c_prev: Array2<f64>,
        reset: Vec<bool>,
        zero_state: bool,
    ) -> StepCache {
        let hd = self.hidden();
        for (row, &r) in reset.iter().enumerate() {
            if r {
                h_prev.row_mut(row).fill(0.0);
                c_prev.row_mut(row).fill(0.0);
            }
        }
        let x = (x - &self.input_shift) * &self.input_gain;
        let mut h1 = x.dot(&self.w1) + &self.b1;
        h1.mapv_inplace(f64::tanh);
        let mut h2 = h1.dot(&self.w2) + &self.b2;
        h2.mapv_inplace(f64::tanh);
        let mut z = h2.dot(&self.lstm_wx) + &self.lstm_b;
        if !zero_state {
            z += &h_prev.dot(&self.lstm_wh);
        }
        let i = z.slice(s![.., 0..hd]).mapv(sigmoid);
        let f = z.slice(s![.., hd..2 * hd]).mapv(sigmoid);
        let g = z.slice(s![.., 2 * hd..3 * hd]).mapv(f64::tanh);
        let o = z.slice(s![.., 3 * hd..4 * hd]).mapv(sigmoid);
        let c = &f * &c_prev + &i * &g;
        let tanh_c = c.mapv(f64::tanh);
        let h = &o * &tanh_c;
        StepCache { x, h1, h2, h_prev, c_prev, i, f, g, o, tanh_c, h, reset }
    }

    fn c_of(step: &StepCache) -> Array2<f64> {
        &step.f * &step.c_prev + &step.i * &step.g
    }

    /// Runs `xs.len()` timesteps for a batch of sequences.
    ///
    /// `resets[t][b]` zeroes the recurrent state of row `b` before step `t`
    /// (an episode boundary inside the sequence).
    pub fn forward_sequence(
        &self,
        xs: &[Array2<f64>],
        resets: Option<&[Vec<bool>]>,
        h0: Array2<f64>,
        c0: Array2<f64>,
    ) -> (SequenceOutput, SequenceCache) {
        let batch = h0.nrows();
        let mut steps = Vec::with_capacity(xs.len());
        let mut mu = Vec::with_capacity(xs.len());
        let mut value = Vec::with_capacity(xs.len());
        let mut zero_state = h0.iter().all(|v| *v == 0.0) && c0.iter().all(|v| *v == 0.0);
        let (mut h, mut c) = (h0, c0);
        for (t, x) in xs.iter().enumerate() {
            let reset = resets.map_or_else(|| vec![false; batch], |r| r[t].clone());
            let step = self.step_forward(x.clone(), h, c, reset, zero_state);
            zero_state = false;
            mu.push(step.h.dot(&self.w_mu) + &self.b_mu);
            value.push((step.h.dot(&self.w_v) + &self.b_v).column(0).to_owned());
            h = step.h.clone();
            c = Self::c_of(&step);
            steps.push(step);
        }
        (SequenceOutput { mu, value, h_last: h, c_last: c }, SequenceCache { steps })
    }

    /// Backpropagates output gradients through a cached sequence.
    ///
    /// Returns parameter gradients (the `log_std` entry is left at zero since
    /// the caller owns that term, and the fixed input tensors get none) and the
    /// gradient with respect to every raw input row.
    /// Gradients are not propagated into the initial recurrent state.
    pub fn backward_sequence(
        &self,
        cache: &SequenceCache,
        d_mu: &[Array2<f64>],
        d_value: &[Array1<f64>],
    ) -> (PolicyParams, Vec<Array2<f64>>) {
        let hd = self.hidden();
        let mut grads = self.zeros_like();
        let mut d_inputs = vec![Array2::zeros((0, 0)); cache.steps.len()];
        let Some(first) = cache.steps.first() else {
            return (grads, d_inputs);
        };
        let batch = first.x.nrows();
        let mut dh_next = Array2::<f64>::zeros((batch, hd));
        let mut dc_next = Array2::<f64>::zeros((batch, hd));

        for (t, st) in cache.steps.iter().enumerate().rev() {
            let dmu = &d_mu[t];
            let dv = d_value[t].view().insert_axis(Axis(1));

            grads.w_mu += &st.h.t().dot(dmu);
            grads.b_mu += &dmu.sum_axis(Axis(0));
            grads.w_v += &st.h.t().dot(&dv);
            grads.b_v += &dv.sum_axis(Axis(0));

            let dh = dmu.dot(&self.w_mu.t()) + dv.dot(&self.w_v.t()) + &dh_next;

            let d_o = &dh * &st.tanh_c;
            let mut dc = &dh * &st.o;
            Zip::from(&mut dc).and(&st.tanh_c).and(&dc_next).for_each(|d, &tc, &n| {
                *d = *d * (1.0 - tc * tc) + n;
            });

            let mut dz = Array2::<f64>::zeros((batch, 4 * hd));
            Zip::from(dz.slice_mut(s![.., 0..hd]))
                .and(&dc)
                .and(&st.g)
                .and(&st.i)
                .for_each(|z, &d, &g, &i| *z = d * g * i * (1.0 - i));
            Zip::from(dz.slice_mut(s![.., hd..2 * hd]))
                .and(&dc)
                .and(&st.c_prev)
                .and(&st.f)
                .for_each(|z, &d, &cp, &f| *z = d * cp * f * (1.0 - f));
            Zip::from(dz.slice_mut(s![.., 2 * hd..3 * hd]))
                .and(&dc)
                .and(&st.i)
                .and(&st.g)
                .for_each(|z, &d, &i, &g| *z = d * i * (1.0 - g * g));
            Zip::from(dz.slice_mut(s![.., 3 * hd..4 * hd]))
                .and(&d_o)
                .and(&st.o)
                .for_each(|z, &d, &o| *z = d * o * (1.0 - o));

            grads.lstm_wx += &st.h2.t().dot(&dz);
            grads.lstm_wh += &st.h_prev.t().dot(&dz);
            grads.lstm_b += &dz.sum_axis(Axis(0));

            let mut dh_prev = dz.dot(&self.lstm_wh.t());
            let mut dc_prev = &dc * &st.f;
            for (row, &r) in st.reset.iter().enumerate() {
                if r {
                    dh_prev.row_mut(row).fill(0.0);
                    dc_prev.row_mut(row).fill(0.0);
                }
            }
            dh_next = dh_prev;
            dc_next = dc_prev;

            let mut dz2 = dz.dot(&self.lstm_wx.t());
            Zip::from(&mut dz2).and(&st.h2).for_each(|d, &a| *d *= 1.0 - a * a);
            grads.w2 += &st.h1.t().dot(&dz2);
            grads.b2 += &dz2.sum_axis(Axis(0));

            let mut dz1 = dz2.dot(&self.w2.t());
            Zip::from(&mut dz1).and(&st.h1).for_each(|d, &a| *d *= 1.0 - a * a);
            grads.w1 += &st.x.t().dot(&dz1);
            grads.b1 += &dz1.sum_axis(Axis(0));

            d_inputs[t] = dz1.dot(&self.w1.t()) * &self.input_gain;
        }
        (grads, d_inputs)
    }

    /// Squashed action means for a batch of observations at zero recurrent state.
    ///
    /// With a zero incoming state the cell reduces to `c = i * g`, so the
    /// forget gate is skipped. Rows are processed in blocks to bound memory.
    pub fn action_means_zero_state(&self, states: ArrayView2<f64>) -> Array2<f64> {
        const BLOCK: usize = 2048;
        let hd = self.hidden();
        let mut out = Array2::zeros((states.nrows(), self.act_dim()));
        let w_i = self.lstm_wx.slice(s![.., 0..hd]);
        let w_g = self.lstm_wx.slice(s![.., 2 * hd..3 * hd]);
        let w_o = self.lstm_wx.slice(s![.., 3 * hd..4 * hd]);
        let b_i = self.lstm_b.slice(s![0..hd]);
        let b_g = self.lstm_b.slice(s![2 * hd..3 * hd]);
        let b_o = self.lstm_b.slice(s![3 * hd..4 * hd]);
        for start in (0..states.nrows()).step_by(BLOCK) {
            let end = (start + BLOCK).min(states.nrows());
            let x = (&states.slice(s![start..end, ..]) - &self.input_shift) * &self.input_gain;
            let mut h1 = x.dot(&self.w1) + &self.b1;
            h1.mapv_inplace(f64::tanh);
            let mut h2 = h1.dot(&self.w2) + &self.b2;
            h2.mapv_inplace(f64::tanh);
            let i = (h2.dot(&w_i) + &b_i).mapv(sigmoid);
            let g = (h2.dot(&w_g) + &b_g).mapv(f64::tanh);
            let mut h = (h2.dot(&w_o) + &b_o).mapv(sigmoid);
            Zip::from(&mut h).and(&i).and(&g).for_each(|o, &i, &g| *o *= (i * g).tanh());
            let mu = h.dot(&self.w_mu) + &self.b_mu;
            out.slice_mut(s![start..end, ..]).assign(&mu.mapv(squash));
        }
        out
    }

    /// Gradient of the summed squashed action with respect to each input row,
    /// at zero recurrent state.
    pub fn summed_action_input_gradients(&self, states: ArrayView2<f64>) -> Array2<f64> {
        let batch = states.nrows();
        let hd = self.hidden();
        let (out, cache) = self.forward_sequence(
            &[states.to_owned()],
            None,
            Array2::zeros((batch, hd)),
            Array2::zeros((batch, hd)),
        );
        let d_mu = out.mu[0].mapv(|m| {
            let t = m.tanh();
            0.5 * (1.0 - t * t)
        });
        let (_, mut d_x) = self.backward_sequence(&cache, &[d_mu], &[Array1::zeros(batch)]);
        d_x.pop().expect("one timestep")
    }
}

/// One recurrent step for a single observation.
pub fn policy_forward(params: &PolicyParams, obs: &[f64], rec: &RecurrentState) -> Result<PolicyOutput> {
    if obs.len() != params.obs_dim() {
        return Err(Error::Shape { what: "observation".into(), expected: params.obs_dim(), actual: obs.len() });
    }
    if rec.h.len() != params.hidden() || rec.c.len() != params.hidden() {
        return Err(Error::Shape { what: "recurrent state".into(), expected: params.hidden(), actual: rec.h.len() });
    }
    let x = Array2::from_shape_vec((1, obs.len()), obs.to_vec()).expect("row vector");
    let h0 = rec.h.clone().insert_axis(Axis(0));
    let c0 = rec.c.clone().insert_axis(Axis(0));
    let (out, _) = params.forward_sequence(&[x], None, h0, c0);
    let mu: Vec<f64> = out.mu[0].row(0).to_vec();
    Ok(PolicyOutput {
        action_mean: mu.iter().map(|&m| squash(m)).collect(),
        mu,
        log_std: params.log_std.to_vec(),
        value: out.value[0][0],
        next: RecurrentState { h: out.h_last.row(0).to_owned(), c: out.c_last.row(0).to_owned() },
    })
}

/// Deterministic setpoints at zero recurrent state; the evaluation mode used
/// by every explainability method.
pub fn deterministic_action(params: &PolicyParams, obs: &[f64]) -> Result<Vec<f64>> {
    Ok(policy_forward(params, obs, &RecurrentState::zeros(params.hidden()))?.action_mean)
}

/// `d(sum_k action_k) / d obs_j` at zero recurrent state.
pub fn input_gradient(params: &PolicyParams, obs: &[f64]) -> Result<Vec<f64>> {
    if obs.len() != params.obs_dim() {
        return Err(Error::Shape { what: "observation".into(), expected: params.obs_dim(), actual: obs.len() });
    }
    let x = Array2::from_shape_vec((1, obs.len()), obs.to_vec()).expect("row vector");
    Ok(params.summed_action_input_gradients(x.view()).row(0).to_vec())
}

/// A deterministic map from observations to setpoints, the common interface
/// of every explainability method. Implemented by the trained network and by
/// hand-built reference models.
pub trait DeterministicPolicy: Sync {
    fn obs_dim(&self) -> usize;
    fn act_dim(&self) -> usize;
    /// Setpoints for each row of `states`.
    fn actions(&self, states: ArrayView2<f64>) -> Array2<f64>;
    /// Gradient of the summed setpoints with respect to each row of `states`.
    fn summed_action_gradients(&self, states: ArrayView2<f64>) -> Array2<f64>;
}

impl DeterministicPolicy for PolicyParams {
    fn obs_dim(&self) -> usize {
        PolicyParams::obs_dim(self)
    }

    fn act_dim(&self) -> usize {
        PolicyParams::act_dim(self)
    }

    fn actions(&self, states: ArrayView2<f64>) -> Array2<f64> {
        self.action_means_zero_state(states)
    }

    fn summed_action_gradients(&self, states: ArrayView2<f64>) -> Array2<f64> {
        self.summed_action_input_gradients(states)
    }
}

/// Scenario-independent description of a network's interface, recorded in
/// parameter files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyShape {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub hidden: usize,
}

impl From<&PolicyParams> for PolicyShape {
    fn from(p: &PolicyParams) -> Self {
        Self { obs_dim: p.obs_dim(), act_dim: p.act_dim(), hidden: p.hidden() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_params(seed: u64, obs: usize, act: usize, hidden: usize) -> PolicyParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = PolicyParams::init(obs, act, hidden, &mut rng);
        // Larger head weights than the default init so outputs are not all ~0.5.
        p.w_mu.mapv_inplace(|w| w * 100.0);
        p
    }

    fn random_obs(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn zero_network_outputs_half() {
        let p = PolicyParams::zeros(5, 3, HIDDEN);
        let out = policy_forward(&p, &[0.3, -0.2, 0.5, 1.0, 0.0], &RecurrentState::zeros(HIDDEN)).unwrap();
        assert_eq!(out.action_mean, vec![0.5; 3]);
        assert_eq!(out.value, 0.0);
        assert_eq!(deterministic_action(&p, &[1.0; 5]).unwrap(), vec![0.5; 3]);
    }

    #[test]
    fn forward_is_deterministic_and_bounded() {
        let p = random_params(1, 7, 3, HIDDEN);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let obs = random_obs(&mut rng, 7);
        let rec = RecurrentState::zeros(HIDDEN);
        let a = policy_forward(&p, &obs, &rec).unwrap();
        let b = policy_forward(&p, &obs, &rec).unwrap();
        assert_eq!(a, b);
        assert!(a.action_mean.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(a.value.is_finite() && a.next.h.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let p = PolicyParams::zeros(5, 3, 8);
        assert!(matches!(
            policy_forward(&p, &[0.0; 4], &RecurrentState::zeros(8)),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn dead_input_has_no_effect() {
        let mut p = random_params(3, 5, 3, 16);
        p.w1.row_mut(2).fill(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut obs = random_obs(&mut rng, 5);
        let a = deterministic_action(&p, &obs).unwrap();
        obs[2] += 0.7;
        assert_eq!(a, deterministic_action(&p, &obs).unwrap());
        assert_eq!(input_gradient(&p, &obs).unwrap()[2], 0.0);
    }

    fn central_difference(p: &PolicyParams, obs: &[f64], j: usize, h: f64) -> f64 {
        let f = |x: &[f64]| deterministic_action(p, x).unwrap().iter().sum::<f64>();
        let mut plus = obs.to_vec();
        let mut minus = obs.to_vec();
        plus[j] += h;
        minus[j] -= h;
        (f(&plus) - f(&minus)) / (2.0 * h)
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for seed in 0..10 {
            let shift: Vec<f64> = (0..7).map(|j| 0.1 * j as f64).collect();
            let gain: Vec<f64> = (0..7).map(|j| 1.0 + j as f64).collect();
            let p = random_params(seed, 7, 3, 32).with_input_normalization(&shift, &gain).unwrap();
            let obs = random_obs(&mut rng, 7);
            let grad = input_gradient(&p, &obs).unwrap();
            for (j, g) in grad.iter().enumerate() {
                let fd = central_difference(&p, &obs, j, 1e-5);
                assert!((g - fd).abs() <= 1e-4 * fd.abs().max(1e-6), "coordinate {j}: {g} vs {fd}");
            }
        }
    }

    /// Scalar test loss over a sequence: weighted sum of means and values.
    fn sequence_loss(
        p: &PolicyParams,
        xs: &[Array2<f64>],
        resets: &[Vec<bool>],
        h0: &Array2<f64>,
        c0: &Array2<f64>,
        w_mu: &[Array2<f64>],
        w_v: &[Array1<f64>],
    ) -> f64 {
        let (out, _) = p.forward_sequence(xs, Some(resets), h0.clone(), c0.clone());
        let mut loss = 0.0;
        for t in 0..xs.len() {
            loss += (&out.mu[t] * &w_mu[t]).sum() + (&out.value[t] * &w_v[t]).sum();
        }
        loss
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (obs, act, hidden, batch, steps) = (4, 2, 6, 3, 4);
        let mut p = PolicyParams::init(obs, act, hidden, &mut rng)
            .with_input_normalization(&[0.1, 0.5, 0.5, 0.5], &[10.0, 2.0, 2.0, 0.5])
            .unwrap();
        p.w_mu.mapv_inplace(|w| w * 50.0);
        let rand_mat = |rng: &mut ChaCha8Rng, r: usize, c: usize| {
            Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
        };
        let xs: Vec<_> = (0..steps).map(|_| rand_mat(&mut rng, batch, obs)).collect();
        let w_mu: Vec<_> = (0..steps).map(|_| rand_mat(&mut rng, batch, act)).collect();
        let w_v: Vec<_> = (0..steps)
            .map(|_| Array1::from_shape_fn(batch, |_| rng.random_range(-1.0..1.0)))
            .collect();
        let mut resets = vec![vec![false; batch]; steps];
        resets[2][1] = true;
        let h0 = rand_mat(&mut rng, batch, hidden) * 0.5;
        let c0 = rand_mat(&mut rng, batch, hidden) * 0.5;

        let (_, cache) = p.forward_sequence(&xs, Some(&resets), h0.clone(), c0.clone());
        let (grads, d_x) = p.backward_sequence(&cache, &w_mu, &w_v);

        let eps = 1e-6;
        let analytic = grads.slices().map(|s| s.to_vec());
        for tensor in 0..TRAINABLE_TENSORS {
            if TENSOR_NAMES[tensor] == "log_std" {
                continue;
            }
            let len = analytic[tensor].len();
            for k in (0..len).step_by((len / 7).max(1)) {
                let mut plus = p.clone();
                plus.slices_mut()[tensor][k] += eps;
                let mut minus = p.clone();
                minus.slices_mut()[tensor][k] -= eps;
                let fd = (sequence_loss(&plus, &xs, &resets, &h0, &c0, &w_mu, &w_v)
                    - sequence_loss(&minus, &xs, &resets, &h0, &c0, &w_mu, &w_v))
                    / (2.0 * eps);
                let a = analytic[tensor][k];
                assert!(
                    (a - fd).abs() <= 1e-5 * fd.abs().max(1e-3),
                    "{} [{k}]: analytic {a} vs numeric {fd}",
                    TENSOR_NAMES[tensor]
                );
            }
        }
        // Input gradients at the last step.
        for j in 0..obs {
            let mut xp = xs.clone();
            xp[3][[0, j]] += eps;
            let mut xm = xs.clone();
            xm[3][[0, j]] -= eps;
            let fd = (sequence_loss(&p, &xp, &resets, &h0, &c0, &w_mu, &w_v)
                - sequence_loss(&p, &xm, &resets, &h0, &c0, &w_mu, &w_v))
                / (2.0 * eps);
            assert!((d_x[3][[0, j]] - fd).abs() <= 1e-5 * fd.abs().max(1e-3));
        }
    }

    #[test]
    fn symmetric_forecast_weights_make_permutation_invariant() {
        let mut p = random_params(8, 5, 2, 16);
        // Features 1..=3 are forecast entries; give them identical input rows.
        let row = p.w1.row(1).to_owned();
        p.w1.row_mut(2).assign(&row);
        p.w1.row_mut(3).assign(&row);
        let obs = [0.1, 0.2, 0.5, 0.9, 0.3];
        let permuted = [0.1, 0.9, 0.2, 0.5, 0.3];
        let a = deterministic_action(&p, &obs).unwrap();
        let b = deterministic_action(&p, &permuted).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        // Negative control: a generic network does distinguish the entries.
        let q = random_params(9, 5, 2, 16);
        let a = deterministic_action(&q, &obs).unwrap();
        let b = deterministic_action(&q, &permuted).unwrap();
        assert!(a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-6));
        let ga = input_gradient(&q, &obs).unwrap();
        assert!((ga[1] - ga[2]).abs() > 1e-9);
    }

    #[test]
    fn batched_and_single_evaluation_agree() {
        let p = random_params(12, 5, 3, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let rows: Vec<Vec<f64>> = (0..6).map(|_| random_obs(&mut rng, 5)).collect();
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let batch = Array2::from_shape_vec((6, 5), flat).unwrap();
        let actions = p.actions(batch.view());
        let grads = p.summed_action_gradients(batch.view());
        for (r, row) in rows.iter().enumerate() {
            let single = deterministic_action(&p, row).unwrap();
            let g = input_gradient(&p, row).unwrap();
            for k in 0..3 {
                assert!((actions[[r, k]] - single[k]).abs() < 1e-14);
            }
            for j in 0..5 {
                assert!((grads[[r, j]] - g[j]).abs() < 1e-14);
            }
        }
    }
}
