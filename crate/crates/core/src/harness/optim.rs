use serde::{Deserialize, Serialize};

use crate::autodiff::ParamGrads;
use crate::encoder::ParamStore;

/// Adam with a linear learning-rate warmup, then constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub warmup_steps: usize,
    t: usize,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &ParamStore, learning_rate: f64, warmup_steps: usize) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.value.data.len()]).collect();
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            warmup_steps,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps_taken(&self) -> usize {
        self.t
    }

    /// Learning rate applied on update number `t` (1-based).
    pub fn rate_at(&self, t: usize) -> f64 {
        if self.warmup_steps == 0 || t >= self.warmup_steps {
            self.learning_rate
        } else {
            self.learning_rate * t as f64 / self.warmup_steps as f64
        }
    }

    /// Parameters without a gradient are left untouched.
    pub fn step(&mut self, params: &mut ParamStore, grads: &ParamGrads) {
        self.t += 1;
        let lr = self.rate_at(self.t);
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (slot, value) in params.values_mut().enumerate() {
            let Some(g) = grads.get(slot) else { continue };
            let (m, v) = (&mut self.m[slot], &mut self.v[slot]);
            for (((x, gi), mi), vi) in value.data.iter_mut().zip(&g.data).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                *x -= lr * (*mi / c1) / ((*vi / c2).sqrt() + self.eps);
            }
        }
    }
}
