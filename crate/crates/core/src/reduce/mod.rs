//! Shape-preserving token reduction operators.

mod block;
mod cached;
mod kvd;
mod matching;
mod plan;
mod schedule;
mod spec;

pub use block::{adaptive_block_merge, block_decisions, midpoint_quantile, BlockDecision};
pub use cached::CachedAssignmentSession;
pub use kvd::{downsampled_dims, ie_kvd_downsample, nearest_upsample, NearestAnchor};
pub use matching::{
    bipartite_match, gated_merge_plan, select_destinations, select_destinations_random,
    ungated_merge_plan, GatedMergeParams, MatchOptions, RatioBase,
};
pub(crate) use matching::detail_oriented;
pub use plan::{apply_merge, apply_unmerge, MergePlan};
pub use schedule::{schedule_alpha, AlphaSchedule, ScheduleMode};
pub use spec::{ReductionKind, ReductionSpec};
