//! Adaptive Block Merge: pool whole low-detail tiles without matching.

use std::collections::{BTreeMap, BTreeSet};

use super::plan::MergePlan;
use crate::error::{Error, Result};
use crate::grid::{FrequencyMap, TokenGrid};

/// Quantile with midpoint interpolation between the two bracketing order
/// statistics.
pub fn midpoint_quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    0.5 * (sorted[lo] + sorted[hi])
}

/// Outcome of the block gate, exposed for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDecision {
    pub threshold: f64,
    /// Row-major token indices of each block, in block order.
    pub blocks: Vec<Vec<usize>>,
    pub pooled: Vec<bool>,
}

/// Decides which `b × b` blocks (edge blocks truncated) are pooled: a block
/// is pooled iff the maximum score inside it is strictly below the
/// `tau_q`-quantile of all scores. When every score is identical and
/// `tau_q == 1`, all blocks are pooled.
pub fn block_decisions(map: &FrequencyMap, b: usize, tau_q: f64) -> Result<BlockDecision> {
    if b == 0 {
        return Err(Error::config("block_size", "must be positive"));
    }
    if !(tau_q > 0.0 && tau_q <= 1.0) {
        return Err(Error::config("threshold_quantile", format!("{tau_q} not in (0, 1]")));
    }
    let (hh, ww) = (map.height(), map.width());
    let scores = map.scores();
    let threshold = midpoint_quantile(scores, tau_q);
    let degenerate = tau_q == 1.0 && scores.iter().all(|&s| s == scores[0]);

    let mut blocks = Vec::new();
    let mut pooled = Vec::new();
    for h0 in (0..hh).step_by(b) {
        for w0 in (0..ww).step_by(b) {
            let mut block = Vec::with_capacity(b * b);
            for h in h0..(h0 + b).min(hh) {
                for w in w0..(w0 + b).min(ww) {
                    block.push(h * ww + w);
                }
            }
            let phi = block.iter().map(|&i| scores[i]).fold(f64::NEG_INFINITY, f64::max);
            pooled.push(degenerate || phi < threshold);
            blocks.push(block);
        }
    }
    Ok(BlockDecision {
        threshold,
        blocks,
        pooled,
    })
}

/// Builds the plan that collapses every pooled block onto its lowest
/// row-major (unprotected) index and keeps all other tokens.
pub fn adaptive_block_merge(
    grid: &TokenGrid,
    map: &FrequencyMap,
    b: usize,
    tau_q: f64,
    protected: &BTreeSet<usize>,
) -> Result<MergePlan> {
    if grid.height() != map.height() || grid.width() != map.width() {
        return Err(Error::dim("score map does not match grid"));
    }
    let decision = block_decisions(map, b, tau_q)?;
    let mut assignments = BTreeMap::new();
    for (block, &pool) in decision.blocks.iter().zip(&decision.pooled) {
        if !pool {
            continue;
        }
        let mut members = block.iter().copied().filter(|i| !protected.contains(i));
        if let Some(dst) = members.next() {
            for src in members {
                assignments.insert(src, dst);
            }
        }
    }
    let n = grid.sites();
    let kept = (0..n).filter(|i| !assignments.contains_key(i)).collect();
    MergePlan::new(n, kept, assignments)
}
