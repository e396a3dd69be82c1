//! Shared Monte Carlo trial sets.

use serde::{Deserialize, Serialize};

use super::noise::NoiseSchedule;
use crate::error::{Error, Result};
use crate::grid::TokenGrid;
use crate::rng::SeededRng;

/// One `(t, ε)` draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub t: usize,
    pub eps: TokenGrid,
}

/// Trials shared by every candidate class of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCTrialSet {
    seed: u64,
    trials: Vec<Trial>,
}

impl MCTrialSet {
    pub fn empty(seed: u64) -> Self {
        Self { seed, trials: Vec::new() }
    }

    pub fn from_trials(seed: u64, trials: Vec<Trial>) -> Self {
        Self { seed, trials }
    }

    /// Draws `count` trials: per trial, `t ~ U{1..T}` then `ε ~ N(0, I)`.
    /// Drawing `a` then `b` trials from one stream equals drawing `a + b`.
    pub fn draw(
        count: usize,
        shape: (usize, usize, usize),
        sched: &NoiseSchedule,
        rng: &mut SeededRng,
    ) -> Self {
        let mut set = Self::empty(rng.seed());
        set.extend(count, shape, sched, rng);
        set
    }

    pub fn extend(&mut self, count: usize, shape: (usize, usize, usize), sched: &NoiseSchedule, rng: &mut SeededRng) {
        let (h, w, c) = shape;
        for _ in 0..count {
            let t = rng.int_inclusive(1, sched.total_steps());
            let eps = rng.normal_grid(h, w, c);
            self.trials.push(Trial { t, eps });
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// Trials `range` as a standalone set.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.end > self.trials.len() || range.start > range.end {
            return Err(Error::config("trials", "slice outside the trial set"));
        }
        Ok(Self {
            seed: self.seed,
            trials: self.trials[range].to_vec(),
        })
    }
}
