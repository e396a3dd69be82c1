//! Frequency-aware token compression for diffusion backbones, with the
//! machinery to check what it does to a diffusion classifier.
//!
//! * [`score`]: per-token detail scores (Laplacian and alternatives).
//! * [`reduce`]: gated token merging, block merging, cached plans and
//!   interpolate-extrapolate KV downsampling.
//! * [`attention`]: a toy attention block hosting those operators, with a
//!   FLOP model.
//! * [`classifier`]: paired Monte Carlo diffusion classification with staged
//!   pruning, plus top-1 and mAP.
//! * [`spectral`]: bandwise margin/variance statistics and the
//!   margin-variance improvement test.
//! * [`harness`]: experiment configs, runners and result files behind the CLI.

pub mod attention;
pub mod classifier;
pub mod error;
pub mod grid;
pub mod harness;
pub mod reduce;
pub mod rng;
pub mod score;
pub mod spectral;

pub use error::{Error, Result};
pub use grid::{reduce_channels, ChannelReduce, FrequencyMap, TokenGrid, TokenSequence};
pub use rng::SeededRng;
pub use score::{detail_rank, laplacian_filter, score_tokens, Padding, ScorePolarity, ScoringMethod};
