use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    Fixed,
    Linear,
}

/// Per-step interpolation factor for IE-KVD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaSchedule {
    pub mode: ScheduleMode,
    pub start: f64,
    /// Ignored in fixed mode.
    #[serde(default)]
    pub end: f64,
}

impl AlphaSchedule {
    pub fn fixed(alpha: f64) -> Self {
        Self {
            mode: ScheduleMode::Fixed,
            start: alpha,
            end: alpha,
        }
    }

    pub fn linear(start: f64, end: f64) -> Self {
        Self {
            mode: ScheduleMode::Linear,
            start,
            end,
        }
    }

    /// `0.8 → 1.2` over the sampling trajectory.
    pub fn default_linear() -> Self {
        Self::linear(0.8, 1.2)
    }

    pub fn at(&self, step_index: usize, total_steps: usize) -> Result<f64> {
        schedule_alpha(self, step_index, total_steps)
    }
}

impl Default for AlphaSchedule {
    fn default() -> Self {
        Self::fixed(0.9)
    }
}

pub fn schedule_alpha(sched: &AlphaSchedule, step_index: usize, total_steps: usize) -> Result<f64> {
    if total_steps == 0 || step_index >= total_steps {
        return Err(Error::config(
            "step_index",
            format!("step {step_index} outside 0..{total_steps}"),
        ));
    }
    Ok(match sched.mode {
        ScheduleMode::Fixed => sched.start,
        ScheduleMode::Linear => {
            let p = if total_steps == 1 {
                0.0
            } else {
                step_index as f64 / (total_steps - 1) as f64
            };
            sched.start + p * (sched.end - sched.start)
        }
    })
}
