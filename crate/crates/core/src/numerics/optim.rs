use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Default for AdamState {
    fn default() -> Self {
        Self::new(0.9, 0.999, 1e-8)
    }
}

impl AdamState {
    pub fn new(beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            beta1,
            beta2,
            epsilon,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update of every parameter. `params` and `grads` are matched by
    /// position and must keep the same order across calls.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor], lr: f64) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::dim("adam_step", &[params.len()], &[grads.len()]));
        }
        if !(lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::dim("adam_step", p.shape(), g.shape()));
            }
            if !g.is_finite() {
                return Err(Error::Divergence("non-finite gradient".into()));
            }
        }
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.second = self.first.clone();
        } else if self.first.len() != params.len()
            || self.first.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len())
        {
            return Err(Error::Contract(
                "parameter set changed between optimizer steps".into(),
            ));
        }

        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            for (((w, &gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
            if !p.is_finite() {
                return Err(Error::Divergence("a parameter overflowed".into()));
            }
        }
        Ok(())
    }
}

/// Step decay: constant for `warm_epochs + period` epochs, then multiplied by
/// `factor` every `period` epochs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSchedule {
    pub base_lr: f64,
    #[serde(default = "default_warm")]
    pub warm_epochs: usize,
    #[serde(default = "default_period")]
    pub period: usize,
    #[serde(default = "default_factor")]
    pub factor: f64,
}

fn default_warm() -> usize {
    20
}
fn default_period() -> usize {
    30
}
fn default_factor() -> f64 {
    0.1
}

impl LrSchedule {
    pub fn new(base_lr: f64) -> Self {
        Self {
            base_lr,
            warm_epochs: default_warm(),
            period: default_period(),
            factor: default_factor(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0) {
            return Err(Error::Config("schedule base_lr must be > 0".into()));
        }
        if !(self.factor > 0.0 && self.factor < 1.0) {
            return Err(Error::Config("schedule factor must lie in (0, 1)".into()));
        }
        if self.warm_epochs < 1 || self.period < 1 {
            return Err(Error::Config("warm_epochs and period must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of decay milestones reached at `epoch`. Milestones sit at
    /// `warm_epochs + period * i` for `i = 1, 2, …`.
    pub fn decays_at(&self, epoch: usize) -> u32 {
        if epoch < self.warm_epochs + self.period {
            0
        } else {
            ((epoch - self.warm_epochs) / self.period) as u32
        }
    }

    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        self.base_lr * self.factor.powi(self.decays_at(epoch) as i32)
    }
}
