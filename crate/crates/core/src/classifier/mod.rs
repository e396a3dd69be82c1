//! Noise process, synthetic predictors and the Monte Carlo diffusion classifier.

mod adaptive;
mod denoiser;
mod metrics;
mod noise;
mod scoring;
mod templates;
mod trials;

pub use adaptive::{adaptive_classify, PruningPolicy};
pub use denoiser::{
    Compression, DenoiseQuery, Denoiser, GaussianMeansDenoiser, OracleDenoiser, Prediction, SyntheticDenoiser,
};
pub use metrics::{average_precision, mean_average_precision, rank_ascending, top1_accuracy};
pub use noise::{
    forward_noise, NoiseSchedule, DEFAULT_TRAIN_STEPS, SCALED_LINEAR_BETA_END, SCALED_LINEAR_BETA_START,
};
pub use scoring::{score_classes, trial_error, ClassScoreTable, Classification};
pub use templates::{isolated_sites, SmoothTemplates, SpikeTemplates};
pub use trials::{MCTrialSet, Trial};
