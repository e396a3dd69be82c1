//! A bare self-attention block (no residual, norm or MLP) that hosts the
//! reduction operators at the self-attention insertion site, plus an
//! analytical FLOP model.
//!
//! FLOP model, per head: a multiply-add counts 2 FLOPs, so `QKᵀ` costs
//! `2·N_q·N_k·d_k` and `A·V` costs the same; softmax costs 5 per logit; each
//! of the three projections costs `2·N·d·d_k` over the tokens it is applied
//! to. These constants are part of the public contract.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TokenSequence;
use crate::reduce::{
    adaptive_block_merge, apply_merge, apply_unmerge, detail_oriented, gated_merge_plan,
    ie_kvd_downsample, CachedAssignmentSession, GatedMergeParams, MatchOptions, MergePlan,
    NearestAnchor, ReductionKind, ReductionSpec,
};
use crate::rng::SeededRng;
use crate::score::{score_tokens_with, ScoringMethod};

pub const SOFTMAX_FLOPS_PER_LOGIT: u64 = 5;

/// Projection weights. Each matrix is `model_dim × (heads·key_dim)`,
/// row-major; head `h` owns columns `h·key_dim .. (h+1)·key_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    model_dim: usize,
    key_dim: usize,
    heads: usize,
    w_q: Vec<f64>,
    w_k: Vec<f64>,
    w_v: Vec<f64>,
}

impl AttentionParams {
    pub fn new(
        model_dim: usize,
        key_dim: usize,
        heads: usize,
        w_q: Vec<f64>,
        w_k: Vec<f64>,
        w_v: Vec<f64>,
    ) -> Result<Self> {
        if model_dim == 0 || key_dim == 0 || heads == 0 {
            return Err(Error::config("attention", "dimensions and head count must be positive"));
        }
        let len = model_dim * key_dim * heads;
        for (name, w) in [("w_q", &w_q), ("w_k", &w_k), ("w_v", &w_v)] {
            if w.len() != len {
                return Err(Error::dim(format!("{name} has {} entries, expected {len}", w.len())));
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::config(name, "non-finite weight"));
            }
        }
        Ok(Self {
            model_dim,
            key_dim,
            heads,
            w_q,
            w_k,
            w_v,
        })
    }

    /// Gaussian weights scaled by `1/√d`.
    pub fn random(model_dim: usize, key_dim: usize, heads: usize, rng: &mut SeededRng) -> Result<Self> {
        let len = model_dim * key_dim * heads;
        let scale = 1.0 / (model_dim as f64).sqrt();
        let mut draw = || rng.normal_vec(len).into_iter().map(|v| v * scale).collect::<Vec<_>>();
        let (q, k, v) = (draw(), draw(), draw());
        Self::new(model_dim, key_dim, heads, q, k, v)
    }

    /// Single head with `W_Q = W_K = W_V = I`.
    pub fn identity(model_dim: usize) -> Result<Self> {
        let mut eye = vec![0.0; model_dim * model_dim];
        for i in 0..model_dim {
            eye[i * model_dim + i] = 1.0;
        }
        Self::new(model_dim, model_dim, 1, eye.clone(), eye.clone(), eye)
    }

    pub fn model_dim(&self) -> usize {
        self.model_dim
    }

    pub fn key_dim(&self) -> usize {
        self.key_dim
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn output_dim(&self) -> usize {
        self.key_dim * self.heads
    }

    pub fn w_q(&self) -> &[f64] {
        &self.w_q
    }

    pub fn w_k(&self) -> &[f64] {
        &self.w_k
    }

    pub fn w_v(&self) -> &[f64] {
        &self.w_v
    }

    fn check_input(&self, x: &TokenSequence) -> Result<()> {
        if x.channels() != self.model_dim {
            return Err(Error::dim(format!(
                "input has {} channels, block expects {}",
                x.channels(),
                self.model_dim
            )));
        }
        Ok(())
    }

    fn project(&self, x: &TokenSequence, w: &[f64]) -> TokenSequence {
        let out_dim = self.output_dim();
        let mut out = vec![0.0; x.count() * out_dim];
        for (row, dst) in x.rows().zip(out.chunks_exact_mut(out_dim)) {
            for (i, &xi) in row.iter().enumerate() {
                let wrow = &w[i * out_dim..(i + 1) * out_dim];
                for (o, wv) in dst.iter_mut().zip(wrow) {
                    *o += xi * wv;
                }
            }
        }
        TokenSequence::new(x.count(), out_dim, out).expect("projection keeps values finite")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FlopReport {
    pub qk_flops: u64,
    pub av_flops: u64,
    pub softmax_flops: u64,
    pub projection_flops: u64,
    pub total: u64,
}

impl FlopReport {
    fn from_parts(qk: u64, av: u64, softmax: u64, projection: u64) -> Self {
        Self {
            qk_flops: qk,
            av_flops: av,
            softmax_flops: softmax,
            projection_flops: projection,
            total: qk + av + softmax + projection,
        }
    }

    /// `QKᵀ + A·V`.
    pub fn attention_flops(&self) -> u64 {
        self.qk_flops + self.av_flops
    }

    pub fn accumulate(&mut self, other: &FlopReport) {
        *self = Self::from_parts(
            self.qk_flops + other.qk_flops,
            self.av_flops + other.av_flops,
            self.softmax_flops + other.softmax_flops,
            self.projection_flops + other.projection_flops,
        );
    }
}

/// Cost of one block with `n_q` query tokens attending over `n_k` key
/// tokens, with `Q` projected over `n_q` tokens and `K`, `V` over `n_k`.
pub fn flop_model(n_q: usize, n_k: usize, d: usize, d_k: usize, heads: usize) -> FlopReport {
    flop_model_projected(n_q, n_k, n_q, n_k, d, d_k, heads)
}

/// As [`flop_model`], with explicit token counts for the projections
/// (e.g. KV downsampling projects `K`, `V` at full length).
pub fn flop_model_projected(
    n_q: usize,
    n_k: usize,
    proj_q_tokens: usize,
    proj_kv_tokens: usize,
    d: usize,
    d_k: usize,
    heads: usize,
) -> FlopReport {
    let (n_q, n_k, d, d_k, h) = (n_q as u64, n_k as u64, d as u64, d_k as u64, heads as u64);
    let qk = 2 * n_q * n_k * d_k * h;
    let av = 2 * n_q * n_k * d_k * h;
    let softmax = SOFTMAX_FLOPS_PER_LOGIT * n_q * n_k * h;
    let projection = 2 * d * d_k * h * (proj_q_tokens as u64 + 2 * proj_kv_tokens as u64);
    FlopReport::from_parts(qk, av, softmax, projection)
}

/// Numerically stable softmax in place.
fn softmax(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}

/// Row-stochastic attention weights of head `head`, `n_q × n_k`.
pub fn attention_weights(
    q: &TokenSequence,
    k: &TokenSequence,
    key_dim: usize,
    head: usize,
) -> Vec<Vec<f64>> {
    let cols = head * key_dim..(head + 1) * key_dim;
    let scale = 1.0 / (key_dim as f64).sqrt();
    q.rows()
        .map(|qr| {
            let qh = &qr[cols.clone()];
            let mut logits: Vec<f64> = k
                .rows()
                .map(|kr| {
                    qh.iter()
                        .zip(&kr[cols.clone()])
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                        * scale
                })
                .collect();
            softmax(&mut logits);
            logits
        })
        .collect()
}

fn attend(q: &TokenSequence, k: &TokenSequence, v: &TokenSequence, key_dim: usize, heads: usize) -> TokenSequence {
    let out_dim = key_dim * heads;
    let mut out = vec![0.0; q.count() * out_dim];
    for head in 0..heads {
        let weights = attention_weights(q, k, key_dim, head);
        for (i, wrow) in weights.iter().enumerate() {
            let dst = &mut out[i * out_dim + head * key_dim..i * out_dim + (head + 1) * key_dim];
            for (j, &a) in wrow.iter().enumerate() {
                let vh = &v.row(j)[head * key_dim..(head + 1) * key_dim];
                for (o, vv) in dst.iter_mut().zip(vh) {
                    *o += a * vv;
                }
            }
        }
    }
    TokenSequence::new(q.count(), out_dim, out).expect("convex combinations of finite values")
}

/// `softmax(QKᵀ/√d_k)·V` per head, heads concatenated.
pub fn attention_forward(x: &TokenSequence, params: &AttentionParams) -> Result<TokenSequence> {
    params.check_input(x)?;
    let q = params.project(x, &params.w_q);
    let k = params.project(x, &params.w_k);
    let v = params.project(x, &params.w_v);
    Ok(attend(&q, &k, &v, params.key_dim, params.heads))
}

/// Output of a reduced attention block.
#[derive(Debug, Clone)]
pub struct ReducedAttention {
    pub output: TokenSequence,
    pub flops: FlopReport,
    /// Tokens attention actually ran over (`N′`, or `Ñ` keys for KVD).
    pub reduced_tokens: usize,
    pub plan: Option<MergePlan>,
}

/// Builds the merge plan a merge-kind spec prescribes for `x` viewed as an
/// `height × width` grid. Scores are taken on the pre-projection states.
pub fn build_merge_plan(
    x: &TokenSequence,
    spec: &ReductionSpec,
    scorer: ScoringMethod,
    height: usize,
    width: usize,
) -> Result<MergePlan> {
    spec.validate()?;
    let grid = x.to_grid(height, width)?;
    match spec.kind {
        ReductionKind::None => MergePlan::identity(x.count()),
        ReductionKind::Lgtm | ReductionKind::CachedAssignment => {
            let params = GatedMergeParams {
                method: scorer,
                padding: spec.padding,
                s_x: spec.stride_x,
                s_y: spec.stride_y,
                ratio: spec.merge_ratio,
                options: MatchOptions {
                    ratio_base: spec.ratio_base,
                    protected: spec.protected.clone(),
                },
            };
            gated_merge_plan(&grid, &params)
        }
        ReductionKind::Abm => {
            let map = detail_oriented(score_tokens_with(&grid, scorer, spec.padding)?, scorer)?;
            adaptive_block_merge(&grid, &map, spec.block_size, spec.threshold_quantile, &spec.protected)
        }
        ReductionKind::IeKvd => Err(Error::config(
            "reduction.kind",
            "ie_kvd is not a merge operator; use attention_with_kvd",
        )),
    }
}

/// Merge → attention over `N′` tokens → unmerge, with a caller-supplied plan.
pub fn attention_with_plan(x: &TokenSequence, params: &AttentionParams, plan: &MergePlan) -> Result<ReducedAttention> {
    params.check_input(x)?;
    let merged = apply_merge(x, plan)?;
    let z = attention_forward(&merged, params)?;
    let output = apply_unmerge(&z, plan)?;
    let n = plan.reduced_count();
    Ok(ReducedAttention {
        output,
        flops: flop_model(n, n, params.model_dim, params.key_dim, params.heads),
        reduced_tokens: n,
        plan: Some(plan.clone()),
    })
}

pub fn attention_with_merge(
    x: &TokenSequence,
    params: &AttentionParams,
    spec: &ReductionSpec,
    scorer: ScoringMethod,
    height: usize,
    width: usize,
) -> Result<ReducedAttention> {
    params.check_input(x)?;
    if spec.kind == ReductionKind::None {
        spec.validate()?;
        let n = x.count();
        return Ok(ReducedAttention {
            output: attention_forward(x, params)?,
            flops: flop_model(n, n, params.model_dim, params.key_dim, params.heads),
            reduced_tokens: n,
            plan: None,
        });
    }
    let plan = build_merge_plan(x, spec, scorer, height, width)?;
    attention_with_plan(x, params, &plan)
}

/// Queries stay at `N`; keys and values are projected at `N`, reshaped to
/// `height × width` and downsampled by `s` with blend factor `alpha`.
pub fn attention_with_kvd(
    x: &TokenSequence,
    params: &AttentionParams,
    s: usize,
    alpha: f64,
    anchor: NearestAnchor,
    height: usize,
    width: usize,
) -> Result<ReducedAttention> {
    params.check_input(x)?;
    let q = params.project(x, &params.w_q);
    let k = params.project(x, &params.w_k);
    let v = params.project(x, &params.w_v);
    let k_small = ie_kvd_downsample(&k.into_grid(height, width)?, s, alpha, anchor)?.into_sequence();
    let v_small = ie_kvd_downsample(&v.into_grid(height, width)?, s, alpha, anchor)?.into_sequence();
    let n = x.count();
    let n_small = k_small.count();
    Ok(ReducedAttention {
        output: attend(&q, &k_small, &v_small, params.key_dim, params.heads),
        flops: flop_model_projected(n, n_small, n, n, params.model_dim, params.key_dim, params.heads),
        reduced_tokens: n_small,
        plan: None,
    })
}

/// Result of running a resolution stage of several blocks.
#[derive(Debug, Clone)]
pub struct StageOutput {
    pub output: TokenSequence,
    pub flops: FlopReport,
    /// Fingerprint of the plan each block used.
    pub plan_fingerprints: Vec<u64>,
}

/// Runs `blocks` in sequence at one timestep, feeding each block's output to
/// the next. With `cached_assignment` the plan is computed in the first block
/// and replayed for the rest of the stage; every other merge kind plans each
/// block afresh.
pub fn run_stage(
    x: &TokenSequence,
    blocks: &[AttentionParams],
    spec: &ReductionSpec,
    scorer: ScoringMethod,
    height: usize,
    width: usize,
    timestep: usize,
) -> Result<StageOutput> {
    if blocks.is_empty() {
        return Err(Error::config("blocks", "stage needs at least one block"));
    }
    let mut current = x.clone();
    let mut flops = FlopReport::default();
    let mut fingerprints = Vec::with_capacity(blocks.len());
    let mut session: Option<CachedAssignmentSession> = None;
    for (b, params) in blocks.iter().enumerate() {
        let plan = match (spec.kind, &session) {
            (ReductionKind::CachedAssignment, Some(s)) => (*s.plan_for(b, timestep, current.count())?).clone(),
            (ReductionKind::CachedAssignment, None) => {
                let plan = build_merge_plan(&current, spec, scorer, height, width)?;
                let s = CachedAssignmentSession::new(blocks.len(), timestep, plan)?;
                let p = (*s.plan_for(b, timestep, current.count())?).clone();
                session = Some(s);
                p
            }
            _ => build_merge_plan(&current, spec, scorer, height, width)?,
        };
        fingerprints.push(plan.fingerprint());
        let step = attention_with_plan(&current, params, &plan)?;
        flops.accumulate(&step.flops);
        current = step.output;
    }
    Ok(StageOutput {
        output: current,
        flops,
        plan_fingerprints: fingerprints,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flop_examples() {
        assert_eq!(flop_model(2, 2, 1, 1, 1).qk_flops, 8);
        let full = flop_model(64, 64, 8, 4, 2);
        let half_k = flop_model(64, 32, 8, 4, 2);
        assert_eq!(full.qk_flops, 2 * half_k.qk_flops);
        assert_eq!(full.av_flops, 2 * half_k.av_flops);
        let merged = flop_model(32, 32, 8, 4, 2);
        assert_eq!(merged.attention_flops() * 4, full.attention_flops());
        let r = flop_model(7, 5, 3, 2, 3);
        assert_eq!(r.total, r.qk_flops + r.av_flops + r.softmax_flops + r.projection_flops);
        assert_eq!(flop_model(16, 16, 4, 4, 1).attention_flops(), 4 * 16 * 16 * 4);
    }

    #[test]
    fn single_token_returns_value_row() {
        let mut rng = SeededRng::new(3);
        let params = AttentionParams::random(3, 2, 1, &mut rng).unwrap();
        let x = TokenSequence::new(1, 3, vec![0.3, -1.0, 2.0]).unwrap();
        let out = attention_forward(&x, &params).unwrap();
        let v = params.project(&x, params.w_v());
        for (a, b) in out.data().iter().zip(v.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn identical_tokens_with_identity_projections() {
        let params = AttentionParams::identity(2).unwrap();
        let x = TokenSequence::new(2, 2, vec![0.5, -1.5, 0.5, -1.5]).unwrap();
        let out = attention_forward(&x, &params).unwrap();
        for row in out.rows() {
            assert!((row[0] - 0.5).abs() < 1e-15 && (row[1] + 1.5).abs() < 1e-15);
        }
    }

    #[test]
    fn wrong_width_is_rejected() {
        let params = AttentionParams::identity(3).unwrap();
        let x = TokenSequence::new(2, 2, vec![0.0; 4]).unwrap();
        assert!(attention_forward(&x, &params).is_err());
    }

    #[test]
    fn kvd_kind_is_not_a_merge() {
        let params = AttentionParams::identity(2).unwrap();
        let x = TokenSequence::new(4, 2, vec![1.0; 8]).unwrap();
        let spec = ReductionSpec::ie_kvd(2, Default::default());
        assert!(attention_with_merge(&x, &params, &spec, ScoringMethod::LaplacianL1, 2, 2).is_err());
    }
}
