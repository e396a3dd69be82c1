use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::kvd::NearestAnchor;
use super::matching::RatioBase;
use super::schedule::AlphaSchedule;
use crate::error::{Error, Result};
use crate::score::Padding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReductionKind {
    Lgtm,
    Abm,
    CachedAssignment,
    IeKvd,
    None,
}

impl ReductionKind {
    pub fn name(self) -> &'static str {
        match self {
            ReductionKind::Lgtm => "lgtm",
            ReductionKind::Abm => "abm",
            ReductionKind::CachedAssignment => "cached_assignment",
            ReductionKind::IeKvd => "ie_kvd",
            ReductionKind::None => "none",
        }
    }

    pub fn is_merge(self) -> bool {
        matches!(
            self,
            ReductionKind::Lgtm | ReductionKind::Abm | ReductionKind::CachedAssignment
        )
    }
}

fn default_ratio() -> f64 {
    0.5
}
fn default_two() -> usize {
    2
}
fn default_quantile() -> f64 {
    0.5
}
fn default_one() -> usize {
    1
}

/// Configuration of one compression operator. Only the fields relevant to
/// `kind` are validated or read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionSpec {
    pub kind: ReductionKind,
    #[serde(default = "default_ratio")]
    pub merge_ratio: f64,
    #[serde(default)]
    pub ratio_base: RatioBase,
    #[serde(default = "default_two")]
    pub stride_x: usize,
    #[serde(default = "default_two")]
    pub stride_y: usize,
    #[serde(default = "default_two")]
    pub block_size: usize,
    #[serde(default = "default_quantile")]
    pub threshold_quantile: f64,
    #[serde(default = "default_two")]
    pub downsample_factor: usize,
    #[serde(default)]
    pub alpha_schedule: AlphaSchedule,
    #[serde(default)]
    pub nearest_anchor: NearestAnchor,
    #[serde(default)]
    pub padding: Padding,
    /// Blocks sharing one cached plan (cached_assignment only).
    #[serde(default = "default_one")]
    pub stage_blocks: usize,
    #[serde(default)]
    pub protected: BTreeSet<usize>,
}

impl ReductionSpec {
    pub fn new(kind: ReductionKind) -> Self {
        Self {
            kind,
            merge_ratio: default_ratio(),
            ratio_base: RatioBase::default(),
            stride_x: 2,
            stride_y: 2,
            block_size: 2,
            threshold_quantile: default_quantile(),
            downsample_factor: 2,
            alpha_schedule: AlphaSchedule::default(),
            nearest_anchor: NearestAnchor::default(),
            padding: Padding::default(),
            stage_blocks: 1,
            protected: BTreeSet::new(),
        }
    }

    pub fn none() -> Self {
        Self::new(ReductionKind::None)
    }

    pub fn lgtm(ratio: f64, stride: usize) -> Self {
        Self {
            merge_ratio: ratio,
            stride_x: stride,
            stride_y: stride,
            ..Self::new(ReductionKind::Lgtm)
        }
    }

    pub fn abm(block_size: usize, threshold_quantile: f64) -> Self {
        Self {
            block_size,
            threshold_quantile,
            ..Self::new(ReductionKind::Abm)
        }
    }

    pub fn ie_kvd(factor: usize, alpha: AlphaSchedule) -> Self {
        Self {
            downsample_factor: factor,
            alpha_schedule: alpha,
            ..Self::new(ReductionKind::IeKvd)
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ReductionKind::None => {}
            ReductionKind::Lgtm | ReductionKind::CachedAssignment => {
                if !(0.0..1.0).contains(&self.merge_ratio) {
                    return Err(Error::config(
                        "reduction.merge_ratio",
                        format!("{} not in [0, 1)", self.merge_ratio),
                    ));
                }
                if self.stride_x == 0 || self.stride_y == 0 {
                    return Err(Error::config("reduction.stride", "must be positive"));
                }
                if self.kind == ReductionKind::CachedAssignment && self.stage_blocks == 0 {
                    return Err(Error::config("reduction.stage_blocks", "must be positive"));
                }
            }
            ReductionKind::Abm => {
                if self.block_size == 0 {
                    return Err(Error::config("reduction.block_size", "must be positive"));
                }
                if !(self.threshold_quantile > 0.0 && self.threshold_quantile <= 1.0) {
                    return Err(Error::config(
                        "reduction.threshold_quantile",
                        format!("{} not in (0, 1]", self.threshold_quantile),
                    ));
                }
            }
            ReductionKind::IeKvd => {
                if self.downsample_factor < 2 {
                    return Err(Error::config(
                        "reduction.downsample_factor",
                        format!("{} < 2", self.downsample_factor),
                    ));
                }
                let s = &self.alpha_schedule;
                if !s.start.is_finite() || !s.end.is_finite() {
                    return Err(Error::config("reduction.alpha_schedule", "must be finite"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_is_kind_specific() {
        let mut s = ReductionSpec::lgtm(1.0, 2);
        assert!(s.validate().is_err());
        s.kind = ReductionKind::IeKvd;
        // merge ratio is irrelevant for ie_kvd
        assert!(s.validate().is_ok());
        s.downsample_factor = 1;
        assert!(s.validate().is_err());
        assert!(ReductionSpec::abm(2, 0.0).validate().is_err());
        assert!(ReductionSpec::abm(2, 1.0).validate().is_ok());
    }

    #[test]
    fn parses_from_toml_with_defaults() {
        let spec: ReductionSpec = toml::from_str(
            r#"
kind = "ie_kvd"
downsample_factor = 4
alpha_schedule = { mode = "linear", start = 0.8, end = 1.2 }
"#,
        )
        .unwrap();
        assert_eq!(spec.kind, ReductionKind::IeKvd);
        assert_eq!(spec.downsample_factor, 4);
        assert_eq!(spec.alpha_schedule, AlphaSchedule::linear(0.8, 1.2));
        assert_eq!(spec.merge_ratio, 0.5);
        assert!(toml::from_str::<ReductionSpec>("kind = \"tome\"").is_err());
        assert!(toml::from_str::<ReductionSpec>("kind = \"abm\"\nbogus = 1").is_err());
    }
}
