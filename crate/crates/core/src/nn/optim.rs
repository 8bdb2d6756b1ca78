//! Adam and the one-cycle learning-rate policy.

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use super::Param;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates. The learning rate is supplied
/// per step so that a schedule can drive it.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    moments: Vec<(ArrayD<f64>, ArrayD<f64>)>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [&mut Param], lr: f64) -> Result<()> {
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| {
                    (
                        ArrayD::zeros(p.value.raw_dim()),
                        ArrayD::zeros(p.value.raw_dim()),
                    )
                })
                .collect();
        }
        if self.moments.len() != params.len() {
            return Err(Error::shape(
                "adam",
                format!(
                    "optimizer tracks {} tensors, got {}",
                    self.moments.len(),
                    params.len()
                ),
            ));
        }
        for ((m, _), p) in self.moments.iter().zip(params.iter()) {
            if m.shape() != p.value.shape() {
                return Err(Error::shape(
                    "adam",
                    format!("moment {:?} vs param {:?}", m.shape(), p.value.shape()),
                ));
            }
        }

        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let correction1 = 1.0 - beta1.powi(self.step as i32);
        let correction2 = 1.0 - beta2.powi(self.step as i32);
        for ((m, v), p) in self.moments.iter_mut().zip(params.iter_mut()) {
            ndarray::Zip::from(&mut p.value)
                .and(&p.grad)
                .and(m)
                .and(v)
                .for_each(|w, &g, m, v| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / correction1;
                    let v_hat = *v / correction2;
                    *w -= lr * m_hat / (v_hat.sqrt() + eps);
                });
        }
        Ok(())
    }
}

/// One-cycle policy: cosine rise from `peak / initial_divisor` to `peak` over
/// the warmup fraction, then cosine decay to
/// `peak / (initial_divisor * final_divisor)` at `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneCycleSchedule {
    pub total_steps: usize,
    pub peak_lr: f64,
    pub warmup_fraction: f64,
    pub initial_divisor: f64,
    pub final_divisor: f64,
}

impl OneCycleSchedule {
    pub fn new(total_steps: usize, peak_lr: f64) -> Result<Self> {
        Self::with_shape(total_steps, peak_lr, 0.3, 25.0, 1e4)
    }

    pub fn with_shape(
        total_steps: usize,
        peak_lr: f64,
        warmup_fraction: f64,
        initial_divisor: f64,
        final_divisor: f64,
    ) -> Result<Self> {
        if total_steps < 2 {
            return Err(Error::config("one-cycle schedule needs at least 2 steps"));
        }
        if !(peak_lr > 0.0 && peak_lr.is_finite()) {
            return Err(Error::config(format!(
                "peak learning rate must be positive, got {peak_lr}"
            )));
        }
        if !(warmup_fraction > 0.0 && warmup_fraction < 1.0) {
            return Err(Error::config(format!(
                "warmup fraction {warmup_fraction} outside (0, 1)"
            )));
        }
        if !(initial_divisor > 1.0 && final_divisor > 1.0) {
            return Err(Error::config("one-cycle divisors must exceed 1"));
        }
        Ok(OneCycleSchedule {
            total_steps,
            peak_lr,
            warmup_fraction,
            initial_divisor,
            final_divisor,
        })
    }

    /// Step index at which the schedule peaks.
    pub fn warmup_steps(&self) -> usize {
        let raw = (self.warmup_fraction * self.total_steps as f64).round() as usize;
        raw.clamp(1, self.total_steps - 1)
    }

    pub fn initial_lr(&self) -> f64 {
        self.peak_lr / self.initial_divisor
    }

    pub fn final_lr(&self) -> f64 {
        self.initial_lr() / self.final_divisor
    }

    pub fn lr(&self, step: usize) -> Result<f64> {
        if step > self.total_steps {
            return Err(Error::config(format!(
                "step {step} beyond schedule length {}",
                self.total_steps
            )));
        }
        let warm = self.warmup_steps();
        let anneal = |start: f64, end: f64, frac: f64| {
            end + (start - end) / 2.0 * (1.0 + (std::f64::consts::PI * frac).cos())
        };
        Ok(if step <= warm {
            anneal(self.initial_lr(), self.peak_lr, step as f64 / warm as f64)
        } else {
            let frac = (step - warm) as f64 / (self.total_steps - warm) as f64;
            anneal(self.peak_lr, self.final_lr(), frac)
        })
    }
}
