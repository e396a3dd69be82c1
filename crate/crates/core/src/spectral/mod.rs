//! Band decomposition of paired differences and per-band responses of
//! reduction operators.

mod basis;
mod response;
mod stats;

pub use basis::{dct_basis, SpectralBasis};
pub use response::{
    estimate_frequency_response, DiagonalOperator, GlobalMeanOperator, IdentityOperator, KvdOperator, PlanOperator,
    ShrinkageProfile, SpatialOperator,
};
pub use stats::{
    band_differences, band_stats, cantelli_bound, compare_reduction, mean_variance, paired_diff_stats,
    paired_diff_stats_weighted, paired_draws, predict_reduced, profile_improvement, simulate_reduced,
    theorem1_check, uniform_weight, BandStats, BandWeight, ImprovementReport, PairedDraw, ReductionComparison,
};
