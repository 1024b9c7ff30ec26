use serde::{Deserialize, Serialize};

use super::network::Mlp;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Adam moment accumulators, shaped like the network they optimize.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    pub first_moment: Mlp,
    pub second_moment: Mlp,
    pub t: u64,
}

impl AdamState {
    pub fn new(like: &Mlp, config: AdamConfig) -> Self {
        Self { config, first_moment: like.zeros_like(), second_moment: like.zeros_like(), t: 0 }
    }

    /// One bias-corrected Adam update of `weights` along `grads`.
    pub fn step(&mut self, weights: &mut Mlp, grads: &Mlp) {
        self.t += 1;
        let AdamConfig { learning_rate, beta1, beta2, epsilon } = self.config;
        let correction1 = 1.0 - beta1.powi(self.t as i32);
        let correction2 = 1.0 - beta2.powi(self.t as i32);
        let params = weights.buffers_mut();
        let firsts = self.first_moment.buffers_mut();
        let seconds = self.second_moment.buffers_mut();
        for (((w, g), m), v) in params.into_iter().zip(grads.buffers()).zip(firsts).zip(seconds) {
            for i in 0..w.len() {
                m[i] = flush_subnormal(beta1 * m[i] + (1.0 - beta1) * g[i]);
                v[i] = flush_subnormal(beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]);
                let m_hat = m[i] / correction1;
                let v_hat = v[i] / correction2;
                w[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
    }
}

/// Moments of rarely active units decay geometrically into the subnormal
/// range, where arithmetic is orders of magnitude slower. Such values are
/// far below `epsilon` and have no effect on the update.
fn flush_subnormal(x: f64) -> f64 {
    if x.is_subnormal() {
        0.0
    } else {
        x
    }
}

/// Free-function form of [`AdamState::step`].
pub fn adam_step(state: &mut AdamState, weights: &mut Mlp, grads: &Mlp) {
    state.step(weights, grads);
}
