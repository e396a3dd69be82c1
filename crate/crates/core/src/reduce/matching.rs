//! Destination selection and similarity-driven bipartite matching.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::plan::MergePlan;
use crate::error::{Error, Result};
use crate::grid::{FrequencyMap, TokenGrid, TokenSequence};
use crate::rng::SeededRng;
use crate::score::{dot, norm2, score_tokens_with, Padding, ScorePolarity, ScoringMethod};

/// What the merge ratio `r` is a fraction of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioBase {
    /// `⌊r·N⌋` sources are merged.
    #[default]
    AllTokens,
    /// `⌊r·|sources|⌋` sources are merged.
    Sources,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchOptions {
    pub ratio_base: RatioBase,
    /// Tokens that are never merged, in either role.
    pub protected: BTreeSet<usize>,
}

fn check_stride(height: usize, width: usize, s_x: usize, s_y: usize) -> Result<()> {
    if s_x == 0 || s_y == 0 {
        return Err(Error::config("grid_stride", "strides must be positive"));
    }
    if s_x > height || s_y > width {
        return Err(Error::config(
            "grid_stride",
            format!("stride {s_x}x{s_y} exceeds grid {height}x{width}"),
        ));
    }
    Ok(())
}

fn cells(height: usize, width: usize, s_x: usize, s_y: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..height).step_by(s_x).flat_map(move |h0| {
        (0..width).step_by(s_y).map(move |w0| {
            let mut cell = Vec::with_capacity(s_x * s_y);
            for h in h0..(h0 + s_x).min(height) {
                for w in w0..(w0 + s_y).min(width) {
                    cell.push(h * width + w);
                }
            }
            cell
        })
    })
}

/// Tiles the map into `⌈H/s_x⌉·⌈W/s_y⌉` cells (rows by `s_x`, columns by
/// `s_y`, edge cells truncated) and returns the minimum-score site of each
/// cell, ascending. Ties go to the lowest row-major index.
pub fn select_destinations(map: &FrequencyMap, s_x: usize, s_y: usize) -> Result<Vec<usize>> {
    check_stride(map.height(), map.width(), s_x, s_y)?;
    let scores = map.scores();
    let mut out: Vec<usize> = cells(map.height(), map.width(), s_x, s_y)
        .map(|cell| {
            cell.into_iter()
                .reduce(|best, i| if scores[i] < scores[best] { i } else { best })
                .expect("cells are nonempty")
        })
        .collect();
    out.sort_unstable();
    Ok(out)
}

/// Frequency-agnostic baseline: one uniformly random destination per cell.
pub fn select_destinations_random(
    height: usize,
    width: usize,
    s_x: usize,
    s_y: usize,
    rng: &mut SeededRng,
) -> Result<Vec<usize>> {
    check_stride(height, width, s_x, s_y)?;
    let mut out: Vec<usize> = cells(height, width, s_x, s_y)
        .map(|cell| cell[rng.int_inclusive(0, cell.len() - 1)])
        .collect();
    out.sort_unstable();
    Ok(out)
}

/// Cosine similarity, or `-inf` when either side has zero norm.
fn cosine_or_neg_inf(a: &[f64], na: f64, b: &[f64], nb: f64) -> f64 {
    if na == 0.0 || nb == 0.0 {
        f64::NEG_INFINITY
    } else {
        dot(a, b) / (na * nb)
    }
}

/// Assigns the most similar sources to destinations.
///
/// Each non-destination token finds its most cosine-similar destination
/// (ties: lowest destination index). Sources are ranked by that similarity,
/// descending (ties: lowest source index), and the first `⌊r·base⌋` are
/// merged. Everything else is kept.
pub fn bipartite_match(
    seq: &TokenSequence,
    destinations: &[usize],
    r: f64,
    opts: &MatchOptions,
) -> Result<MergePlan> {
    let n = seq.count();
    if !(0.0..1.0).contains(&r) {
        return Err(Error::config("merge_ratio", format!("{r} not in [0, 1)")));
    }
    if destinations.is_empty() {
        return Err(Error::config("destinations", "destination set is empty"));
    }
    if let Some(&bad) = destinations.iter().find(|&&d| d >= n) {
        return Err(Error::dim(format!("destination {bad} >= token count {n}")));
    }
    let dest_set: BTreeSet<usize> = destinations
        .iter()
        .copied()
        .filter(|d| !opts.protected.contains(d))
        .collect();
    let sources: Vec<usize> = (0..n)
        .filter(|i| !dest_set.contains(i) && !opts.protected.contains(i) && !destinations.contains(i))
        .collect();

    let base = match opts.ratio_base {
        RatioBase::AllTokens => n,
        RatioBase::Sources => sources.len(),
    };
    let k = ((r * base as f64).floor() as usize).min(sources.len());
    if k == 0 || dest_set.is_empty() {
        return MergePlan::identity(n);
    }

    let dests: Vec<(usize, &[f64], f64)> = dest_set
        .iter()
        .map(|&d| (d, seq.row(d), norm2(seq.row(d))))
        .collect();
    let mut candidates: Vec<(usize, usize, f64)> = Vec::with_capacity(sources.len());
    for &s in &sources {
        let row = seq.row(s);
        let ns = norm2(row);
        let mut best: Option<(usize, f64)> = None;
        for &(d, drow, nd) in &dests {
            let sim = cosine_or_neg_inf(row, ns, drow, nd);
            if sim == f64::NEG_INFINITY {
                continue;
            }
            if best.is_none_or(|(_, b)| sim > b) {
                best = Some((d, sim));
            }
        }
        if let Some((d, sim)) = best {
            candidates.push((s, d, sim));
        }
    }
    if candidates.is_empty() {
        return Err(Error::ZeroNorm(
            "bipartite matching: every source-destination pair is degenerate".into(),
        ));
    }
    // stable sort keeps ascending source order among equal similarities
    candidates.sort_by(|a, b| b.2.total_cmp(&a.2));

    let assignments: BTreeMap<usize, usize> =
        candidates.iter().take(k).map(|&(s, d, _)| (s, d)).collect();
    let kept: Vec<usize> = (0..n).filter(|i| !assignments.contains_key(i)).collect();
    MergePlan::new(n, kept, assignments)
}

/// Parameters of Laplacian-gated merging.
#[derive(Debug, Clone, PartialEq)]
pub struct GatedMergeParams {
    pub method: ScoringMethod,
    pub padding: Padding,
    pub s_x: usize,
    pub s_y: usize,
    pub ratio: f64,
    pub options: MatchOptions,
}

impl GatedMergeParams {
    pub fn new(method: ScoringMethod, stride: usize, ratio: f64) -> Self {
        Self {
            method,
            padding: Padding::Replicate,
            s_x: stride,
            s_y: stride,
            ratio,
            options: MatchOptions::default(),
        }
    }
}

/// Score → per-cell least-detailed destination → bipartite matching.
pub fn gated_merge_plan(grid: &TokenGrid, params: &GatedMergeParams) -> Result<MergePlan> {
    let map = detail_oriented(score_tokens_with(grid, params.method, params.padding)?, params.method)?;
    let destinations = select_destinations(&map, params.s_x, params.s_y)?;
    bipartite_match(&grid.to_sequence(), &destinations, params.ratio, &params.options)
}

/// Similarity-only baseline: random destination per cell, same matching.
pub fn ungated_merge_plan(
    grid: &TokenGrid,
    stride: usize,
    ratio: f64,
    options: &MatchOptions,
    rng: &mut SeededRng,
) -> Result<MergePlan> {
    let destinations = select_destinations_random(grid.height(), grid.width(), stride, stride, rng)?;
    bipartite_match(&grid.to_sequence(), &destinations, ratio, options)
}

/// Flips lower-is-detail maps so that larger always means more detail.
pub(crate) fn detail_oriented(map: FrequencyMap, method: ScoringMethod) -> Result<FrequencyMap> {
    match method.polarity() {
        ScorePolarity::HigherIsDetail => Ok(map),
        ScorePolarity::LowerIsDetail => FrequencyMap::new(
            map.height(),
            map.width(),
            map.scores().iter().map(|v| -v).collect(),
        ),
    }
}
