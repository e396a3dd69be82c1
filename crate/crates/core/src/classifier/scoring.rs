//! Paired Monte Carlo class scoring.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::denoiser::{DenoiseQuery, Denoiser};
use super::noise::{forward_noise, NoiseSchedule};
use super::trials::{MCTrialSet, Trial};
use crate::error::{Error, Result};
use crate::grid::TokenGrid;

/// Per-class trial errors plus the surviving-class mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScoreTable {
    errors: Vec<Vec<f64>>,
    survivors: Vec<bool>,
}

impl ClassScoreTable {
    /// Table over `class_count` classes with `active` marked as survivors.
    pub fn new(class_count: usize, active: &[usize]) -> Result<Self> {
        let mut survivors = vec![false; class_count];
        for &c in active {
            *survivors
                .get_mut(c)
                .ok_or_else(|| Error::config("classes", format!("class {c} outside 0..{class_count}")))? = true;
        }
        Ok(Self {
            errors: vec![Vec::new(); class_count],
            survivors,
        })
    }

    pub fn class_count(&self) -> usize {
        self.errors.len()
    }

    pub fn errors(&self, class: usize) -> &[f64] {
        &self.errors[class]
    }

    pub fn trial_count(&self, class: usize) -> usize {
        self.errors[class].len()
    }

    /// `L̂(x, c)`, or `None` before the class has any trial.
    pub fn mean(&self, class: usize) -> Option<f64> {
        let e = &self.errors[class];
        (!e.is_empty()).then(|| e.iter().sum::<f64>() / e.len() as f64)
    }

    pub fn is_survivor(&self, class: usize) -> bool {
        self.survivors[class]
    }

    pub fn survivors(&self) -> Vec<usize> {
        (0..self.survivors.len()).filter(|&c| self.survivors[c]).collect()
    }

    pub(crate) fn push(&mut self, class: usize, error: f64) {
        self.errors[class].push(error);
    }

    /// Survivors ordered by ascending mean error, ties to the lower index.
    pub fn ranked_survivors(&self) -> Vec<usize> {
        let mut s = self.survivors();
        s.sort_by(|&a, &b| {
            let ma = self.mean(a).unwrap_or(f64::INFINITY);
            let mb = self.mean(b).unwrap_or(f64::INFINITY);
            ma.total_cmp(&mb).then(a.cmp(&b))
        });
        s
    }

    /// Keeps the `keep` best survivors.
    pub fn prune_to(&mut self, keep: usize) -> Result<()> {
        let ranked = self.ranked_survivors();
        if keep > ranked.len() {
            return Err(Error::config(
                "policy.keep_list",
                format!("keeps {keep} classes but only {} survive", ranked.len()),
            ));
        }
        for &c in &ranked[keep..] {
            self.survivors[c] = false;
        }
        Ok(())
    }

    /// `argmin_c L̂(x, c)` over survivors.
    pub fn argmin(&self) -> Option<usize> {
        self.ranked_survivors().first().copied()
    }
}

/// A class decision with its score table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub prediction: usize,
    pub table: ClassScoreTable,
    /// Survivor sets after each pruning stage (a single entry when unpruned).
    pub survivor_history: Vec<Vec<usize>>,
}

/// Error and plan fingerprint of one `(x, c, t, ε)` evaluation.
pub(crate) fn evaluate(
    x: &TokenGrid,
    class: usize,
    trial: &Trial,
    denoiser: &dyn Denoiser,
    sched: &NoiseSchedule,
) -> Result<(f64, Option<u64>)> {
    let x_t = forward_noise(x, trial.t, &trial.eps, sched)?;
    let query = DenoiseQuery {
        x_t: &x_t,
        t: trial.t,
        alpha_bar: sched.alpha_bar(trial.t)?,
        total_steps: sched.total_steps(),
        class,
        noise: &trial.eps,
    };
    let pred = denoiser.predict(&query)?;
    Ok((pred.eps.squared_distance(&trial.eps)?, pred.plan_fingerprint))
}

/// `ℓ(x, c; t, ε) = ‖ε − ε_θ(x_t, c, t)‖²`.
pub fn trial_error(
    x: &TokenGrid,
    class: usize,
    trial: &Trial,
    denoiser: &dyn Denoiser,
    sched: &NoiseSchedule,
) -> Result<f64> {
    if !trial.eps.same_shape(x) {
        return Err(Error::dim("noise shape differs from sample"));
    }
    evaluate(x, class, trial, denoiser, sched).map(|(e, _)| e)
}

/// Runs every trial of `trials` for every class in `classes` and appends the
/// errors to `table`. Fails the audit if classes disagree on the compression
/// plan inside one trial.
pub(crate) fn accumulate(
    table: &mut ClassScoreTable,
    x: &TokenGrid,
    classes: &[usize],
    trials: &[Trial],
    denoiser: &dyn Denoiser,
    sched: &NoiseSchedule,
) -> Result<()> {
    for trial in trials {
        if !trial.eps.same_shape(x) {
            return Err(Error::dim("noise shape differs from sample"));
        }
    }
    let per_trial: Vec<Vec<(f64, Option<u64>)>> = trials
        .par_iter()
        .map(|trial| {
            classes
                .iter()
                .map(|&c| evaluate(x, c, trial, denoiser, sched))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    for (s, row) in per_trial.iter().enumerate() {
        if let Some((_, first)) = row.first() {
            if row.iter().any(|(_, fp)| fp != first) {
                return Err(Error::Audit(format!(
                    "trial {s} (t = {}) used different reduction plans across classes",
                    trials[s].t
                )));
            }
        }
    }
    for row in per_trial {
        for (&c, (e, _)) in classes.iter().zip(row) {
            table.push(c, e);
        }
    }
    Ok(())
}

pub(crate) fn check_classes(classes: &[usize], class_count: usize) -> Result<()> {
    if classes.is_empty() {
        return Err(Error::config("classes", "no candidate classes"));
    }
    let mut seen = vec![false; class_count];
    for &c in classes {
        match seen.get_mut(c) {
            None => return Err(Error::config("classes", format!("class {c} outside 0..{class_count}"))),
            Some(true) => return Err(Error::config("classes", format!("class {c} listed twice"))),
            Some(s) => *s = true,
        }
    }
    Ok(())
}

/// Scores every class in `classes` on the same trial set and predicts the
/// argmin, ties to the lowest class index.
pub fn score_classes(
    x: &TokenGrid,
    classes: &[usize],
    trials: &MCTrialSet,
    denoiser: &dyn Denoiser,
    sched: &NoiseSchedule,
) -> Result<Classification> {
    if trials.is_empty() {
        return Err(Error::config("trials", "empty trial set"));
    }
    check_classes(classes, denoiser.class_count())?;
    let mut table = ClassScoreTable::new(denoiser.class_count(), classes)?;
    accumulate(&mut table, x, classes, trials.trials(), denoiser, sched)?;
    let prediction = table.argmin().expect("nonempty class list");
    let survivors = table.survivors();
    Ok(Classification {
        prediction,
        table,
        survivor_history: vec![survivors],
    })
}
