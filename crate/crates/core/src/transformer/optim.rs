use serde::{Deserialize, Serialize};

use super::encoder::Params;

/// Linear warmup from 0 to `peak` over `warmup_steps`, then linear decay to
/// 0 at `total_steps`. Steps count applied updates from 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearSchedule {
    pub peak: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
}

impl LinearSchedule {
    /// Warmup given as a fraction of one epoch, rounded to whole steps
    /// (at least one).
    pub fn from_epochs(peak: f64, warmup_fraction: f64, steps_per_epoch: usize, max_epochs: usize) -> Self {
        let total_steps = steps_per_epoch * max_epochs;
        let warmup_steps = ((warmup_fraction * steps_per_epoch as f64).round() as usize).clamp(1, total_steps.max(1));
        LinearSchedule {
            peak,
            warmup_steps,
            total_steps,
        }
    }

    pub fn lr(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            self.peak * step as f64 / self.warmup_steps as f64
        } else if step >= self.total_steps {
            if step == self.warmup_steps {
                self.peak
            } else {
                0.0
            }
        } else {
            self.peak * (self.total_steps - step) as f64 / (self.total_steps - self.warmup_steps) as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Adam with decoupled weight decay. Biases and layer-norm parameters are
/// not decayed.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: AdamWConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

fn decays(name: &str) -> bool {
    !(name.ends_with("bias") || name.contains("LayerNorm"))
}

impl AdamW {
    pub fn new(config: AdamWConfig, n_params: usize) -> Self {
        AdamW {
            config,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    /// Applies one update with learning rate `lr` using `grad`, which must
    /// have the same layout as `params`.
    pub fn step<P: Params>(&mut self, params: &mut P, grad: &P, lr: f64) {
        self.t += 1;
        let c = self.config;
        let g = grad.flatten();
        let bc1 = 1.0 - c.beta1.powi(self.t);
        let bc2 = 1.0 - c.beta2.powi(self.t);
        let (m, v) = (&mut self.m, &mut self.v);
        let mut i = 0usize;
        params.visit_mut("", &mut |name, values| {
            let wd = if decays(name) { c.weight_decay } else { 0.0 };
            for p in values.iter_mut() {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                *p -= lr * wd * *p;
                *p -= lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + c.eps);
                i += 1;
            }
        });
    }
}

/// Scales `grad` so its global L2 norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_grad_norm<P: Params>(grad: &mut P, max_norm: f64) -> f64 {
    let norm = grad.flatten().iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let k = max_norm / (norm + 1e-6);
        grad.visit_mut("", &mut |_, v| v.iter_mut().for_each(|g| *g *= k));
    }
    norm
}
