//! Staged pruning over cumulative trial budgets.

use serde::{Deserialize, Serialize};

use super::denoiser::Denoiser;
use super::noise::NoiseSchedule;
use super::scoring::{accumulate, check_classes, ClassScoreTable, Classification};
use super::trials::MCTrialSet;
use crate::error::{Error, Result};
use crate::grid::TokenGrid;
use crate::rng::SeededRng;

/// Cumulative trials and survivor counts per stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PruningPolicy {
    pub trial_list: Vec<usize>,
    pub keep_list: Vec<usize>,
}

impl Default for PruningPolicy {
    /// `[5, 20]` trials, keeping `[5, 1]`.
    fn default() -> Self {
        Self {
            trial_list: vec![5, 20],
            keep_list: vec![5, 1],
        }
    }
}

impl PruningPolicy {
    pub fn new(trial_list: Vec<usize>, keep_list: Vec<usize>) -> Result<Self> {
        let p = Self { trial_list, keep_list };
        p.validate()?;
        Ok(p)
    }

    /// `[5, 20, 100]` trials, keeping `[50, 10, 1]`.
    pub fn large() -> Self {
        Self {
            trial_list: vec![5, 20, 100],
            keep_list: vec![50, 10, 1],
        }
    }

    /// Keeps every class until the last stage.
    pub fn keep_all(class_count: usize, trial_list: Vec<usize>) -> Result<Self> {
        let mut keep_list = vec![class_count; trial_list.len()];
        if let Some(last) = keep_list.last_mut() {
            *last = 1;
        }
        Self::new(trial_list, keep_list)
    }

    pub fn stage_count(&self) -> usize {
        self.trial_list.len()
    }

    pub fn total_trials(&self) -> usize {
        self.trial_list.last().copied().unwrap_or(0)
    }

    /// Trial counts must rise strictly; survivor counts may not grow.
    pub fn validate(&self) -> Result<()> {
        if self.trial_list.is_empty() {
            return Err(Error::config("policy.trial_list", "needs at least one stage"));
        }
        if self.trial_list.len() != self.keep_list.len() {
            return Err(Error::config("policy", "trial_list and keep_list differ in length"));
        }
        if self.trial_list[0] == 0 || self.trial_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("policy.trial_list", "must be positive and strictly increasing"));
        }
        if self.keep_list.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::config("policy.keep_list", "must be nonincreasing"));
        }
        if self.keep_list.last() < Some(&1) {
            return Err(Error::config("policy.keep_list", "final entry must be at least 1"));
        }
        Ok(())
    }
}

/// Staged classification: each stage draws `trial_list[i] − trial_list[i−1]`
/// fresh shared trials for the survivors, then keeps the `keep_list[i]`
/// lowest mean errors (ties to the lower index).
pub fn adaptive_classify(
    x: &TokenGrid,
    classes: &[usize],
    policy: &PruningPolicy,
    denoiser: &dyn Denoiser,
    sched: &NoiseSchedule,
    rng: &mut SeededRng,
) -> Result<Classification> {
    policy.validate()?;
    check_classes(classes, denoiser.class_count())?;
    let final_keep = *policy.keep_list.last().expect("validated");
    if classes.len() < final_keep {
        return Err(Error::config(
            "policy.keep_list",
            format!("final stage keeps {final_keep} of {} classes", classes.len()),
        ));
    }
    let shape = (x.height(), x.width(), x.channels());
    let mut table = ClassScoreTable::new(denoiser.class_count(), classes)?;
    let mut history = Vec::with_capacity(policy.stage_count());
    let mut prev = 0;
    for (&target, &keep) in policy.trial_list.iter().zip(&policy.keep_list) {
        let fresh = MCTrialSet::draw(target - prev, shape, sched, rng);
        let survivors = table.survivors();
        accumulate(&mut table, x, &survivors, fresh.trials(), denoiser, sched)?;
        table.prune_to(keep)?;
        history.push(table.survivors());
        prev = target;
    }
    let prediction = table.argmin().expect("at least one survivor");
    Ok(Classification {
        prediction,
        table,
        survivor_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::denoiser::OracleDenoiser;

    #[test]
    fn policy_validation() {
        assert!(PruningPolicy::default().validate().is_ok());
        assert!(PruningPolicy::large().validate().is_ok());
        assert!(PruningPolicy::new(vec![5, 5], vec![2, 1]).is_err());
        assert!(PruningPolicy::new(vec![5, 10], vec![1, 2]).is_err());
        assert!(PruningPolicy::new(vec![5, 10], vec![2, 0]).is_err());
        assert!(PruningPolicy::new(vec![5], vec![1, 1]).is_err());
        assert!(PruningPolicy::new(vec![0, 3], vec![2, 1]).is_err());
        assert_eq!(
            PruningPolicy::keep_all(4, vec![2, 6]).unwrap().keep_list,
            vec![4, 1]
        );
    }

    #[test]
    fn oracle_true_class_survives_every_stage() {
        let sched = NoiseSchedule::default();
        let mut rng = SeededRng::new(11);
        let x = rng.normal_grid(2, 2, 2);
        let d = OracleDenoiser::new(7, 10).unwrap();
        let classes: Vec<usize> = (0..10).collect();
        let p = PruningPolicy::new(vec![2, 5, 9], vec![6, 3, 1]).unwrap();
        let out = adaptive_classify(&x, &classes, &p, &d, &sched, &mut rng).unwrap();
        assert_eq!(out.prediction, 7);
        assert!(out.survivor_history.iter().all(|s| s.contains(&7)));
        assert_eq!(out.survivor_history.iter().map(Vec::len).collect::<Vec<_>>(), vec![6, 3, 1]);
    }

    #[test]
    fn keep_above_survivors_is_a_config_error() {
        let sched = NoiseSchedule::default();
        let mut rng = SeededRng::new(1);
        let x = rng.normal_grid(1, 1, 1);
        let d = OracleDenoiser::new(0, 3).unwrap();
        let p = PruningPolicy::new(vec![1, 2], vec![5, 1]).unwrap();
        assert!(matches!(
            adaptive_classify(&x, &[0, 1, 2], &p, &d, &sched, &mut rng),
            Err(Error::Config { .. })
        ));
    }
}
