use super::{Float, ParamSet};
use crate::error::{Error, Result};

/// Linear warm-up to `peak_lr`, then inverse-square-root decay.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrSchedule {
    pub peak_lr: f64,
    pub warmup_steps: u64,
}

impl LrSchedule {
    pub fn lr(&self, step: u64) -> f64 {
        if step == 0 {
            return 0.0;
        }
        if self.warmup_steps == 0 {
            return self.peak_lr;
        }
        let s = step as f64;
        let w = self.warmup_steps as f64;
        self.peak_lr * (s / w).min((w / s).sqrt())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub schedule: LrSchedule,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
            schedule: LrSchedule {
                peak_lr: 0.01,
                warmup_steps: 6000,
            },
        }
    }
}

/// Bias-corrected Adam moments for every tensor of a [`ParamSet`].
#[derive(Clone, Debug)]
pub struct AdamState<F> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

impl<F: Float> AdamState<F> {
    pub fn new(params: &ParamSet<F>, config: AdamConfig) -> Self {
        let zeros = || params.iter().map(|(_, _, t)| vec![F::zero(); t.numel()]).collect();
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

    /// Applies one update using the gradients stored on `params` and
    /// returns the learning rate that was used.
    pub fn step(&mut self, params: &mut ParamSet<F>) -> Result<f64> {
        if params.len() != self.m.len() {
            return Err(Error::Usage("optimizer state does not match parameters".into()));
        }
        if let Some((_, name, _)) = params.iter().find(|(_, _, t)| t.grad().is_none()) {
            return Err(Error::Usage(format!("parameter {name} has no gradient")));
        }
        self.step += 1;
        let c = self.config;
        let lr = c.schedule.lr(self.step);
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (F::of(c.beta1), F::of(c.beta2));
        let (one_b1, one_b2) = (F::one() - b1, F::one() - b2);
        let step_size = F::of(lr / bc1);
        let inv_sqrt_bc2 = F::of(1.0 / bc2.sqrt());
        let eps = F::of(c.eps);

        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            let i = id.index();
            let tensor = params.get_mut(id);
            let g = tensor.grad().unwrap().to_vec();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (k, w) in tensor.data_mut().iter_mut().enumerate() {
                m[k] = b1 * m[k] + one_b1 * g[k];
                v[k] = b2 * v[k] + one_b2 * g[k] * g[k];
                *w -= step_size * m[k] / (v[k].sqrt() * inv_sqrt_bc2 + eps);
            }
        }
        Ok(lr)
    }
}
