use crate::policy::{PolicyParams, TRAINABLE_TENSORS};

/// Adam optimizer with moment buffers shaped like the network. Only the
/// trainable tensors are touched.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: PolicyParams,
    v: PolicyParams,
    t: i32,
}

impl Adam {
    pub fn new(params: &PolicyParams, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: &mut PolicyParams, grads: &PolicyParams) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let lr = self.learning_rate;
        let eps = self.epsilon;
        let tensors = params
            .slices_mut()
            .into_iter()
            .zip(grads.slices())
            .zip(self.m.slices_mut())
            .zip(self.v.slices_mut())
            .take(TRAINABLE_TENSORS);
        for (((p, g), m), v) in tensors {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = PolicyParams::zeros(2, 1, 3);
        let mut g = p.zeros_like();
        g.b_v[0] = 0.37;
        g.b_mu[0] = -5.0;
        let mut opt = Adam::new(&p, 1e-3);
        opt.step(&mut p, &g);
        assert!((p.b_v[0] + 1e-3).abs() < 1e-9);
        assert!((p.b_mu[0] - 1e-3).abs() < 1e-9);
        assert_eq!(p.w1[[0, 0]], 0.0);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = PolicyParams::zeros(1, 1, 1);
        let mut opt = Adam::new(&p, 0.05);
        for _ in 0..2000 {
            let mut g = p.zeros_like();
            g.b_v[0] = 2.0 * (p.b_v[0] - 3.0);
            opt.step(&mut p, &g);
        }
        assert!((p.b_v[0] - 3.0).abs() < 1e-3);
    }
}
