//! Cached Assignment Merge: one plan per resolution stage and timestep.

use std::sync::Arc;

use super::plan::MergePlan;
use crate::error::{Error, Result};

/// Replays the plan computed in the first block of a stage for the remaining
/// blocks of that stage. The session is bound to one timestep; asking for the
/// plan at any other timestep is an error, so plans never leak across
/// denoising steps.
#[derive(Debug, Clone)]
pub struct CachedAssignmentSession {
    stage_blocks: usize,
    timestep: usize,
    plan: Arc<MergePlan>,
}

impl CachedAssignmentSession {
    pub fn new(stage_blocks: usize, timestep: usize, first_plan: MergePlan) -> Result<Self> {
        if stage_blocks == 0 {
            return Err(Error::config("stage_blocks", "a stage has at least one block"));
        }
        Ok(Self {
            stage_blocks,
            timestep,
            plan: Arc::new(first_plan),
        })
    }

    pub fn stage_blocks(&self) -> usize {
        self.stage_blocks
    }

    pub fn timestep(&self) -> usize {
        self.timestep
    }

    /// The shared plan for `block` of this stage at `timestep`, checked
    /// against the block's token count.
    pub fn plan_for(&self, block: usize, timestep: usize, token_count: usize) -> Result<Arc<MergePlan>> {
        if timestep != self.timestep {
            return Err(Error::StaleCache {
                created: self.timestep,
                requested: timestep,
            });
        }
        if block >= self.stage_blocks {
            return Err(Error::config(
                "block",
                format!("block {block} outside stage of {}", self.stage_blocks),
            ));
        }
        if token_count != self.plan.original_count() {
            return Err(Error::dim(format!(
                "stage plan covers {} tokens, block has {token_count}",
                self.plan.original_count()
            )));
        }
        Ok(Arc::clone(&self.plan))
    }
}
