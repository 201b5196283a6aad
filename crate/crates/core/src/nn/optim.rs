use serde::{Deserialize, Serialize};

use super::params::{Grads, ParamStore};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 penalty folded into the gradient; 0 disables.
    pub weight_decay: f64,
    /// Global-norm clip; `None` disables.
    pub grad_clip: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            grad_clip: None,
        }
    }
}

/// First/second moment estimates and the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros = params.zero_grads().0;
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    pub state: AdamState,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        Self {
            config,
            state: AdamState::new(params),
        }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &Grads, lr: f64) {
        let cfg = &self.config;
        let clip_scale = match cfg.grad_clip {
            Some(max) => {
                let norm = grads.global_norm();
                if norm > max {
                    max / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        self.state.step += 1;
        let t = self.state.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for id in params.ids().collect::<Vec<_>>() {
            let i = id.index();
            let g = &grads.0[i];
            let (m, v) = (&mut self.state.m[i], &mut self.state.v[i]);
            let w = params.get_mut(id);
            for j in 0..w.len() {
                let gj = g[j] * clip_scale + cfg.weight_decay * w[j];
                m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
                v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                w[j] -= lr * mhat / (vhat.sqrt() + cfg.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = ParamStore::new();
        let id = p.add("w", vec![2], vec![1.0, -1.0]);
        let mut g = p.zero_grads();
        g.0[0] = vec![0.5, -2.0];
        let mut adam = Adam::new(AdamConfig::default(), &p);
        adam.step(&mut p, &g, 0.1);
        // bias-corrected first step is lr * sign(g) up to eps
        assert!((p.get(id)[0] - 0.9).abs() < 1e-6);
        assert!((p.get(id)[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn zero_lr_is_identity() {
        let mut p = ParamStore::new();
        p.add("w", vec![3], vec![0.1, 0.2, 0.3]);
        let before = p.clone();
        let mut g = p.zero_grads();
        g.0[0] = vec![1.0, 1.0, 1.0];
        Adam::new(AdamConfig::default(), &p).step(&mut p, &g, 0.0);
        assert_eq!(p, before);
    }
}
