use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TokenGrid;

pub const DEFAULT_TRAIN_STEPS: usize = 1000;
pub const SCALED_LINEAR_BETA_START: f64 = 0.00085;
pub const SCALED_LINEAR_BETA_END: f64 = 0.012;

/// Cumulative signal fractions `ᾱ_t` for `t = 1..=T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    /// Accepts any nonincreasing sequence in `[0, 1]`.
    pub fn from_alpha_bars(alpha_bars: Vec<f64>) -> Result<Self> {
        if alpha_bars.is_empty() {
            return Err(Error::config("schedule", "needs at least one step"));
        }
        if alpha_bars.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::config("schedule", "alpha_bar values must lie in [0, 1]"));
        }
        if alpha_bars.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::config("schedule", "alpha_bar must be nonincreasing in t"));
        }
        Ok(Self { alpha_bars })
    }

    fn from_betas(betas: impl Iterator<Item = f64>) -> Self {
        let mut acc = 1.0;
        let alpha_bars = betas
            .map(|b| {
                acc *= 1.0 - b;
                acc
            })
            .collect();
        Self { alpha_bars }
    }

    /// `β_t` linear in `√β` between the endpoints.
    pub fn scaled_linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        check_betas(steps, beta_start, beta_end)?;
        let (a, b) = (beta_start.sqrt(), beta_end.sqrt());
        Ok(Self::from_betas((0..steps).map(|i| {
            let f = if steps == 1 { 0.0 } else { i as f64 / (steps - 1) as f64 };
            let r = a + f * (b - a);
            r * r
        })))
    }

    /// `β_t` linear between the endpoints.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        check_betas(steps, beta_start, beta_end)?;
        Ok(Self::from_betas((0..steps).map(|i| {
            let f = if steps == 1 { 0.0 } else { i as f64 / (steps - 1) as f64 };
            beta_start + f * (beta_end - beta_start)
        })))
    }

    pub fn total_steps(&self) -> usize {
        self.alpha_bars.len()
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        if t == 0 || t > self.alpha_bars.len() {
            return Err(Error::Range {
                t,
                max: self.alpha_bars.len(),
            });
        }
        Ok(self.alpha_bars[t - 1])
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }
}

impl Default for NoiseSchedule {
    /// 1000-step scaled-linear schedule, β from 0.00085 to 0.012.
    fn default() -> Self {
        Self::scaled_linear(DEFAULT_TRAIN_STEPS, SCALED_LINEAR_BETA_START, SCALED_LINEAR_BETA_END)
            .expect("valid constants")
    }
}

fn check_betas(steps: usize, start: f64, end: f64) -> Result<()> {
    if steps == 0 {
        return Err(Error::config("schedule.steps", "must be positive"));
    }
    for (name, b) in [("beta_start", start), ("beta_end", end)] {
        if !(b > 0.0 && b < 1.0) {
            return Err(Error::config(format!("schedule.{name}"), format!("{b} not in (0, 1)")));
        }
    }
    Ok(())
}

/// `√ᾱ_t·x0 + √(1−ᾱ_t)·ε`.
pub fn forward_noise(x0: &TokenGrid, t: usize, eps: &TokenGrid, sched: &NoiseSchedule) -> Result<TokenGrid> {
    let ab = sched.alpha_bar(t)?;
    x0.axpby(ab.sqrt(), eps, (1.0 - ab).sqrt())
}
