//! Shape-preserving operators and their per-band responses.

use serde::{Deserialize, Serialize};

use super::basis::SpectralBasis;
use crate::error::{Error, Result};
use crate::grid::TokenGrid;
use crate::reduce::{apply_merge, apply_unmerge, ie_kvd_downsample, nearest_upsample, MergePlan, NearestAnchor};

/// A map from `H × W × C` grids to grids of the same shape.
pub trait SpatialOperator: Sync {
    fn name(&self) -> String;
    fn apply(&self, grid: &TokenGrid) -> Result<TokenGrid>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityOperator;

impl SpatialOperator for IdentityOperator {
    fn name(&self) -> String {
        "identity".into()
    }

    fn apply(&self, grid: &TokenGrid) -> Result<TokenGrid> {
        Ok(grid.clone())
    }
}

/// Replaces every token by the per-channel mean over the grid.
#[derive(Debug, Clone, Copy, Default)]
pub struct GlobalMeanOperator;

impl SpatialOperator for GlobalMeanOperator {
    fn name(&self) -> String {
        "global_mean".into()
    }

    fn apply(&self, grid: &TokenGrid) -> Result<TokenGrid> {
        let c = grid.channels();
        let mut mean = vec![0.0; c];
        for tok in grid.data().chunks_exact(c) {
            for (m, v) in mean.iter_mut().zip(tok) {
                *m += v;
            }
        }
        let n = grid.sites() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        TokenGrid::from_fn(grid.height(), grid.width(), c, |_, _, ch| mean[ch])
    }
}

/// Interpolate-extrapolate downsampling followed by nearest upsampling.
#[derive(Debug, Clone, Copy)]
pub struct KvdOperator {
    pub factor: usize,
    pub alpha: f64,
    pub anchor: NearestAnchor,
}

impl SpatialOperator for KvdOperator {
    fn name(&self) -> String {
        format!("ie_kvd(s={}, alpha={})", self.factor, self.alpha)
    }

    fn apply(&self, grid: &TokenGrid) -> Result<TokenGrid> {
        let small = ie_kvd_downsample(grid, self.factor, self.alpha, self.anchor)?;
        nearest_upsample(&small, self.factor, grid.height(), grid.width())
    }
}

/// Merge then unmerge with a frozen plan; linear in the input.
#[derive(Debug, Clone)]
pub struct PlanOperator {
    pub plan: MergePlan,
}

impl SpatialOperator for PlanOperator {
    fn name(&self) -> String {
        format!("merge_plan({:016x})", self.plan.fingerprint())
    }

    fn apply(&self, grid: &TokenGrid) -> Result<TokenGrid> {
        let seq = grid.to_sequence();
        apply_unmerge(&apply_merge(&seq, &self.plan)?, &self.plan)?.into_grid(grid.height(), grid.width())
    }
}

/// Scales band `k` of every channel by `gains[k]`.
#[derive(Debug, Clone)]
pub struct DiagonalOperator {
    pub basis: SpectralBasis,
    pub gains: Vec<f64>,
}

impl DiagonalOperator {
    pub fn new(basis: SpectralBasis, gains: Vec<f64>) -> Result<Self> {
        if gains.len() != basis.len() {
            return Err(Error::dim(format!("{} gains for {} bands", gains.len(), basis.len())));
        }
        Ok(Self { basis, gains })
    }
}

impl SpatialOperator for DiagonalOperator {
    fn name(&self) -> String {
        "diagonal".into()
    }

    fn apply(&self, grid: &TokenGrid) -> Result<TokenGrid> {
        let c = grid.channels();
        let coeffs = self.basis.project_grid(grid)?;
        let mut out = vec![0.0; grid.data().len()];
        for (ch, co) in coeffs.iter().enumerate() {
            let scaled: Vec<f64> = co.iter().zip(&self.gains).map(|(a, g)| a * g).collect();
            for (site, v) in self.basis.synthesize(&scaled)?.into_iter().enumerate() {
                out[site * c + ch] = v;
            }
        }
        TokenGrid::new(grid.height(), grid.width(), c, out)
    }
}

/// `H_P(k) = ⟨φ_k, P φ_k⟩` plus the off-diagonal leakage `‖Pφ_k − H_P(k)φ_k‖`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkageProfile {
    pub operator: String,
    pub response: Vec<f64>,
    pub leakage: Vec<f64>,
}

impl ShrinkageProfile {
    /// A profile given directly as gains, with no leakage.
    pub fn from_gains(operator: impl Into<String>, response: Vec<f64>) -> Self {
        let leakage = vec![0.0; response.len()];
        Self {
            operator: operator.into(),
            response,
            leakage,
        }
    }

    pub fn len(&self) -> usize {
        self.response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.response.is_empty()
    }
}

pub fn estimate_frequency_response(op: &dyn SpatialOperator, basis: &SpectralBasis) -> Result<ShrinkageProfile> {
    let mut response = Vec::with_capacity(basis.len());
    let mut leakage = Vec::with_capacity(basis.len());
    for k in 0..basis.len() {
        let phi = basis.mode_grid(k);
        let out = op.apply(&phi)?;
        if !out.same_shape(&phi) {
            return Err(Error::dim(format!(
                "{} maps {}x{}x1 to {}x{}x{}",
                op.name(),
                phi.height(),
                phi.width(),
                out.height(),
                out.width(),
                out.channels()
            )));
        }
        let h = crate::score::dot(basis.mode(k), out.data());
        let leak: f64 = out
            .data()
            .iter()
            .zip(basis.mode(k))
            .map(|(p, f)| (p - h * f).powi(2))
            .sum();
        response.push(h);
        leakage.push(leak.sqrt());
    }
    Ok(ShrinkageProfile {
        operator: op.name(),
        response,
        leakage,
    })
}
