//! Adam optimizer with bias-corrected moment estimates.

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use crate::nn::ParamSet;

/// Optimizer hyperparameters.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    /// Settings used for the separator.
    pub fn separator(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Settings used for the critics: a lower first-moment decay keeps the
    /// critic responsive while the data distribution it scores shifts.
    pub fn critic(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.5,
            beta2: 0.9,
            eps: 1e-8,
        }
    }
}

/// Adam state for one model. Moment tensors are stored in the model's
/// parameter-traversal order.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<ArrayD<f64>>,
    v: Vec<ArrayD<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &dyn ParamSet) -> Self {
        let mut m = Vec::new();
        params.visit(&mut |p| m.push(ArrayD::zeros(p.raw_dim())));
        let v = m.clone();
        Adam {
            config,
            step: 0,
            m,
            v,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update. `grads` must align with the model's parameter
    /// traversal, one gradient tensor per parameter tensor.
    pub fn step(&mut self, params: &mut dyn ParamSet, grads: &[ArrayD<f64>]) {
        assert_eq!(grads.len(), self.m.len(), "gradient/parameter count mismatch");
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        let mut i = 0;
        params.visit_mut(&mut |mut p| {
            let g = &grads[i];
            assert_eq!(g.shape(), p.shape(), "gradient shape mismatch at tensor {i}");
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            m.zip_mut_with(g, |m, &g| *m = c.beta1 * *m + (1.0 - c.beta1) * g);
            v.zip_mut_with(g, |v, &g| *v = c.beta2 * *v + (1.0 - c.beta2) * g * g);
            ndarray::Zip::from(&mut p)
                .and(&*m)
                .and(&*v)
                .for_each(|p, &m, &v| {
                    *p -= c.lr * (m / bc1) / ((v / bc2).sqrt() + c.eps);
                });
            i += 1;
        });
    }
}
