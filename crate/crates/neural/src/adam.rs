use serde::{Deserialize, Serialize};

use crate::params::ParamSet;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Self::default()
        }
    }
}

/// Bias-corrected Adam moments for every block of a [`ParamSet`].
///
/// Steps minimize; negate gradients to ascend.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &ParamSet, config: AdamConfig) -> Self {
        let zeros = || {
            params
                .blocks()
                .iter()
                .map(|b| Tensor::zeros(b.value.rows(), b.value.cols()))
                .collect::<Vec<_>>()
        };
        AdamState {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update. Blocks whose gradient is `None` are left alone,
    /// moments included.
    pub fn update(&mut self, params: &mut ParamSet, grads: &[Option<Tensor>]) {
        assert_eq!(grads.len(), params.len(), "one gradient slot per block");
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (id, g) in params.ids().collect::<Vec<_>>().into_iter().zip(grads) {
            let Some(g) = g else { continue };
            let k = id.index();
            let p = params.get_mut(id);
            assert_eq!(p.shape(), g.shape(), "gradient shape mismatch");
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (((pv, gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let mh = *mv / bc1;
                let vh = *vv / bc2;
                *pv -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.add("x", Tensor::scalar(value));
        p
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut p = single(1.25);
        let mut adam = AdamState::new(&p, AdamConfig::with_lr(0.1));
        adam.update(&mut p, &[Some(Tensor::scalar(0.0))]);
        assert_eq!(p.blocks()[0].value.item(), 1.25);
    }

    #[test]
    fn first_step_moves_by_learning_rate_against_gradient_sign() {
        for g in [3.0, -0.02] {
            let mut p = single(0.0);
            let mut adam = AdamState::new(&p, AdamConfig::with_lr(0.05));
            adam.update(&mut p, &[Some(Tensor::scalar(g))]);
            let moved = p.blocks()[0].value.item();
            assert!((moved + 0.05 * f64::signum(g)).abs() < 1e-6, "moved {moved}");
        }
    }
}
