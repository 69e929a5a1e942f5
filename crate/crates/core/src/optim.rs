//! Adam with per-parameter state for trainable tensors only, and learning
//! rate schedules.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods are missing without std
use num_traits::Float;

use crate::error::{Error, Result};
use crate::model::{Gradients, ParamTree};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    /// First and second moments per trainable storage name, allocated on
    /// first update.
    state: BTreeMap<String, (Vec<f32>, Vec<f32>)>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            state: BTreeMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn has_state(&self, name: &str) -> bool {
        self.state.contains_key(name)
    }

    pub fn state_names(&self) -> impl Iterator<Item = &str> {
        self.state.keys().map(String::as_str)
    }

    pub fn moments(&self, name: &str) -> Option<(&[f32], &[f32])> {
        self.state.get(name).map(|(m, v)| (m.as_slice(), v.as_slice()))
    }

    /// One bias-corrected update. `grads` must cover exactly the trainable
    /// tensors of `tree`.
    pub fn step(&mut self, tree: &mut ParamTree, grads: &Gradients, lr: f64) -> Result<()> {
        for (name, g) in grads {
            let t = tree.get(name).ok_or_else(|| Error::UnknownParameter(name.clone()))?;
            if !t.requires_grad {
                return Err(Error::GradientForFrozen(name.clone()));
            }
            if g.len() != t.numel() {
                return Err(Error::Shape(format!("gradient for `{name}` has {} values", g.len())));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("gradient"));
            }
        }
        if let Some(missing) = tree.trainable_names().into_iter().find(|n| !grads.contains_key(n)) {
            return Err(Error::MissingGradient(missing));
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let step_size = (lr / bc1) as f32;
        let (b1, b2) = (c.beta1 as f32, c.beta2 as f32);
        let bc2_sqrt = bc2.sqrt() as f32;
        let eps = c.eps as f32;
        for (name, g) in grads {
            let (m, v) = self
                .state
                .entry(name.clone())
                .or_insert_with(|| (vec![0.0; g.len()], vec![0.0; g.len()]));
            let p = tree.get_mut(name).expect("checked above").values_mut();
            for i in 0..g.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= step_size * m[i] / (v[i].sqrt() / bc2_sqrt + eps);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    /// Linear warmup to `peak`, then `peak * sqrt(warmup / step)`.
    InverseSqrt { peak: f64, warmup: u64 },
    /// Linear warmup to `peak`, then polynomial decay reaching `end` at
    /// `total` and staying there.
    Polynomial {
        peak: f64,
        warmup: u64,
        total: u64,
        end: f64,
        power: f64,
    },
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        let (peak, warmup) = match *self {
            Schedule::InverseSqrt { peak, warmup } => (peak, warmup),
            Schedule::Polynomial {
                peak, warmup, total, end, ..
            } => {
                if total <= warmup {
                    return Err(Error::InvalidSchedule(format!("total {total} must exceed warmup {warmup}")));
                }
                if end < 0.0 {
                    return Err(Error::InvalidSchedule("negative end rate".into()));
                }
                (peak, warmup)
            }
        };
        if warmup < 1 {
            return Err(Error::InvalidSchedule("warmup must be at least 1".into()));
        }
        if !(peak > 0.0) {
            return Err(Error::InvalidSchedule("peak must be positive".into()));
        }
        Ok(())
    }

    pub fn peak(&self) -> f64 {
        match *self {
            Schedule::InverseSqrt { peak, .. } | Schedule::Polynomial { peak, .. } => peak,
        }
    }

    pub fn with_peak(self, peak: f64) -> Self {
        match self {
            Schedule::InverseSqrt { warmup, .. } => Schedule::InverseSqrt { peak, warmup },
            Schedule::Polynomial {
                warmup, total, end, power, ..
            } => Schedule::Polynomial {
                peak,
                warmup,
                total,
                end,
                power,
            },
        }
    }
}

/// Learning rate for optimizer step `step` (the first update is step 1).
pub fn lr_at(schedule: &Schedule, step: u64) -> f64 {
    let s = step as f64;
    match *schedule {
        Schedule::InverseSqrt { peak, warmup } => {
            let w = warmup as f64;
            if s <= w {
                peak * s / w
            } else {
                peak * (w / s).sqrt()
            }
        }
        Schedule::Polynomial {
            peak,
            warmup,
            total,
            end,
            power,
        } => {
            let w = warmup as f64;
            if s <= w {
                peak * s / w
            } else if step >= total {
                end
            } else {
                let frac = 1.0 - (s - w) / (total as f64 - w);
                end + (peak - end) * frac.powf(power)
            }
        }
    }
}
