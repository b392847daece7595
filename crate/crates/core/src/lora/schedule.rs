use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{LoraError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    Cosine,
}

impl LrSchedule {
    pub fn lr_at(self, step: usize, total_steps: usize, lr_max: f64) -> Result<f64> {
        match self {
            LrSchedule::Constant => {
                if step > total_steps {
                    return Err(LoraError::InvalidArgument(format!("step {step} beyond {total_steps}")));
                }
                Ok(lr_max)
            }
            LrSchedule::Cosine => cosine_lr(step, total_steps, lr_max),
        }
    }
}

/// `lr_max * 0.5 * (1 + cos(pi * step / total_steps))`.
pub fn cosine_lr(step: usize, total_steps: usize, lr_max: f64) -> Result<f64> {
    if total_steps == 0 {
        return Err(LoraError::InvalidArgument("total_steps must be at least 1".into()));
    }
    if step > total_steps {
        return Err(LoraError::InvalidArgument(format!("step {step} beyond {total_steps}")));
    }
    if step == total_steps {
        return Ok(0.0);
    }
    Ok(lr_max * 0.5 * (1.0 + (PI * step as f64 / total_steps as f64).cos()))
}
