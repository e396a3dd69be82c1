//! Straight-line reference implementations used as test oracles. They are
//! written from the formulas, never by calling the library code they check.
#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeSet;

use freqmerge::attention::AttentionParams;
use freqmerge::reduce::MergePlan;
use freqmerge::spectral::{SpatialOperator, SpectralBasis};
use freqmerge::{ScoringMethod, SeededRng, TokenGrid, TokenSequence};

pub fn random_grid(h: usize, w: usize, c: usize, seed: u64) -> TokenGrid {
    SeededRng::new(seed).normal_grid(h, w, c)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn at(g: &TokenGrid, h: isize, w: isize, c: usize) -> f64 {
    let hh = h.clamp(0, g.height() as isize - 1) as usize;
    let ww = w.clamp(0, g.width() as isize - 1) as usize;
    g.data()[(hh * g.width() + ww) * g.channels() + c]
}

/// 3×3 Laplacian by explicit kernel sum, clamp-to-edge borders.
pub fn laplacian_oracle(g: &TokenGrid) -> Vec<f64> {
    let kernel = [[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]];
    let mut out = Vec::new();
    for h in 0..g.height() as isize {
        for w in 0..g.width() as isize {
            for c in 0..g.channels() {
                let mut acc = 0.0;
                for (i, row) in kernel.iter().enumerate() {
                    for (j, k) in row.iter().enumerate() {
                        acc += k * at(g, h + i as isize - 1, w + j as isize - 1, c);
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

fn token(g: &TokenGrid, h: usize, w: usize) -> Vec<f64> {
    (0..g.channels()).map(|c| g.data()[(h * g.width() + w) * g.channels() + c]).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    d / (norm(a) * norm(b))
}

/// Moduli of the unnormalized length-C DFT by direct summation.
pub fn naive_dft_magnitudes(x: &[f64]) -> Vec<f64> {
    let c = x.len();
    (0..c)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, v) in x.iter().enumerate() {
                let ang = -2.0 * std::f64::consts::PI * (n * k) as f64 / c as f64;
                re += v * ang.cos();
                im += v * ang.sin();
            }
            (re * re + im * im).sqrt()
        })
        .collect()
}

/// Per-site score by the table formula.
pub fn score_oracle(g: &TokenGrid, method: ScoringMethod) -> Vec<f64> {
    let (hh, ww, cc) = (g.height(), g.width(), g.channels());
    let mut mu = vec![0.0; cc];
    for h in 0..hh {
        for w in 0..ww {
            for (c, m) in mu.iter_mut().enumerate() {
                *m += token(g, h, w)[c] / (hh * ww) as f64;
            }
        }
    }
    let lap = laplacian_oracle(g);
    let mut out = Vec::new();
    for h in 0..hh {
        for w in 0..ww {
            let x = token(g, h, w);
            let site = h * ww + w;
            let v = match method {
                ScoringMethod::GlobalMeanDeviation => {
                    norm(&x.iter().zip(&mu).map(|(a, b)| a - b).collect::<Vec<_>>())
                }
                ScoringMethod::L1Norm => x.iter().map(|v| v.abs()).sum(),
                ScoringMethod::L2Norm => norm(&x),
                ScoringMethod::ChannelVariance => {
                    let m = x.iter().sum::<f64>() / cc as f64;
                    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / cc as f64
                }
                ScoringMethod::LaplacianL1 => {
                    (0..cc).map(|c| lap[site * cc + c].abs()).sum::<f64>() / cc as f64
                }
                ScoringMethod::LaplacianL2 => {
                    ((0..cc).map(|c| lap[site * cc + c].powi(2)).sum::<f64>() / cc as f64).sqrt()
                }
                ScoringMethod::DftSpectralCentroid => {
                    let m = naive_dft_magnitudes(&x);
                    let num: f64 = m.iter().enumerate().map(|(k, a)| (k + 1) as f64 * a).sum();
                    num / m.iter().sum::<f64>()
                }
                ScoringMethod::DftTotalAmplitude => naive_dft_magnitudes(&x).iter().sum(),
                ScoringMethod::CosineToNeighbors => {
                    let mut nb = Vec::new();
                    if h > 0 {
                        nb.push(token(g, h - 1, w));
                    }
                    if h + 1 < hh {
                        nb.push(token(g, h + 1, w));
                    }
                    if w > 0 {
                        nb.push(token(g, h, w - 1));
                    }
                    if w + 1 < ww {
                        nb.push(token(g, h, w + 1));
                    }
                    nb.iter().map(|y| cosine(&x, y)).sum::<f64>() / nb.len() as f64
                }
                ScoringMethod::CosineToGlobalMean => cosine(&x, &mu),
            };
            out.push(v);
        }
    }
    out
}

/// Minimum-score site of every `s × s` cell by exhaustive scan.
pub fn cell_argmin_oracle(scores: &[f64], h: usize, w: usize, s: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut ch = 0;
    while ch < h {
        let mut cw = 0;
        while cw < w {
            let mut best = usize::MAX;
            for i in 0..h * w {
                let (r, c) = (i / w, i % w);
                if r >= ch && r < ch + s && c >= cw && c < cw + s && (best == usize::MAX || scores[i] < scores[best]) {
                    best = i;
                }
            }
            out.push(best);
            cw += s;
        }
        ch += s;
    }
    out.sort_unstable();
    out
}

/// Source → destination assignment by enumerating the full similarity
/// matrix and repeatedly picking the global best remaining source.
pub fn brute_force_matching(seq: &TokenSequence, destinations: &[usize], r: f64) -> Vec<(usize, usize)> {
    let n = seq.count();
    let sims: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| cosine(seq.row(i), seq.row(j))).collect())
        .collect();
    let mut pool: Vec<(usize, usize, f64)> = (0..n)
        .filter(|i| !destinations.contains(i))
        .map(|s| {
            let mut best = (usize::MAX, f64::NEG_INFINITY);
            for d in 0..n {
                if destinations.contains(&d) && (sims[s][d] > best.1 || (sims[s][d] == best.1 && d < best.0)) {
                    best = (d, sims[s][d]);
                }
            }
            (s, best.0, best.1)
        })
        .collect();
    let k = (r * n as f64).floor() as usize;
    let mut picked = Vec::new();
    for _ in 0..k.min(pool.len()) {
        let mut bi = 0;
        for i in 1..pool.len() {
            let (a, b) = (&pool[i], &pool[bi]);
            if a.2 > b.2 || (a.2 == b.2 && a.0 < b.0) {
                bi = i;
            }
        }
        let (s, d, _) = pool.remove(bi);
        picked.push((s, d));
    }
    picked.sort_unstable();
    picked
}

/// Dense `M` (`N′ × N`) with one equal-weight averaging row per kept token.
pub fn dense_merge_matrix(plan: &MergePlan) -> Vec<Vec<f64>> {
    let n = plan.original_count();
    plan.destinations()
        .iter()
        .map(|&d| {
            let mut members = vec![d];
            members.extend(plan.assignments().iter().filter(|(_, &t)| t == d).map(|(&s, _)| s));
            let mut row = vec![0.0; n];
            for m in &members {
                row[*m] = 1.0 / members.len() as f64;
            }
            row
        })
        .collect()
}

/// Dense `U` (`N × N′`): row `i` selects the slot of `i`'s destination.
pub fn dense_unmerge_matrix(plan: &MergePlan) -> Vec<Vec<f64>> {
    let dests = plan.destinations();
    (0..plan.original_count())
        .map(|i| {
            let target = plan.assignments().get(&i).copied().unwrap_or(i);
            let slot = dests.iter().position(|&d| d == target).expect("target is kept");
            let mut row = vec![0.0; dests.len()];
            row[slot] = 1.0;
            row
        })
        .collect()
}

/// `A · B` with `B` given as the rows of a token sequence.
pub fn matmul(a: &[Vec<f64>], b: &TokenSequence) -> Vec<f64> {
    let c = b.channels();
    let mut out = Vec::new();
    for row in a {
        for ch in 0..c {
            out.push(row.iter().enumerate().map(|(j, m)| m * b.row(j)[ch]).sum());
        }
    }
    out
}

/// Multi-head softmax attention by explicit loops over heads, queries and
/// keys.
pub fn attention_oracle(x: &TokenSequence, p: &AttentionParams) -> Vec<f64> {
    let (n, d, dk, heads) = (x.count(), p.model_dim(), p.key_dim(), p.heads());
    let od = dk * heads;
    let proj = |w: &[f64]| -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| (0..od).map(|o| (0..d).map(|c| x.row(i)[c] * w[c * od + o]).sum()).collect())
            .collect()
    };
    let (q, k, v) = (proj(p.w_q()), proj(p.w_k()), proj(p.w_v()));
    let mut out = vec![0.0; n * od];
    for h in 0..heads {
        for i in 0..n {
            let logits: Vec<f64> = (0..n)
                .map(|j| (0..dk).map(|e| q[i][h * dk + e] * k[j][h * dk + e]).sum::<f64>() / (dk as f64).sqrt())
                .collect();
            let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
            for j in 0..n {
                let a = (logits[j] - m).exp() / z;
                for e in 0..dk {
                    out[i * od + h * dk + e] += a * v[j][h * dk + e];
                }
            }
        }
    }
    out
}

/// Window means of an `s`-pooling with truncated border windows.
pub fn average_pool_oracle(g: &TokenGrid, s: usize) -> Vec<f64> {
    let (hh, ww, cc) = (g.height(), g.width(), g.channels());
    let mut out = Vec::new();
    for i in 0..hh.div_ceil(s) {
        for j in 0..ww.div_ceil(s) {
            for c in 0..cc {
                let mut acc = 0.0;
                let mut cnt = 0.0;
                for h in i * s..((i + 1) * s).min(hh) {
                    for w in j * s..((j + 1) * s).min(ww) {
                        acc += token(g, h, w)[c];
                        cnt += 1.0;
                    }
                }
                out.push(acc / cnt);
            }
        }
    }
    out
}

/// Nearest sampling at window offset `(⌊s/2⌋, ⌊s/2⌋)`, clamped.
pub fn nearest_pool_oracle(g: &TokenGrid, s: usize) -> Vec<f64> {
    let (hh, ww) = (g.height(), g.width());
    let mut out = Vec::new();
    for i in 0..hh.div_ceil(s) {
        for j in 0..ww.div_ceil(s) {
            out.extend(token(g, (i * s + s / 2).min(hh - 1), (j * s + s / 2).min(ww - 1)));
        }
    }
    out
}

/// Average precision from its definition: mean over positives of the
/// precision at that positive's rank.
pub fn ap_oracle(scores: &[f64], positives: &BTreeSet<usize>) -> f64 {
    let n = scores.len();
    // rank of label i = number of labels strictly ahead of it
    let rank = |i: usize| {
        (0..n)
            .filter(|&j| scores[j] < scores[i] || (scores[j] == scores[i] && j < i))
            .count()
    };
    let mut total = 0.0;
    for &p in positives {
        let rp = rank(p);
        let hits = positives.iter().filter(|&&q| rank(q) <= rp).count();
        total += hits as f64 / (rp + 1) as f64;
    }
    total / positives.len() as f64
}

/// `H_P(k) = φ_kᵀ A φ_k` with `A` assembled column by column from the
/// operator's action on unit impulses.
pub fn dense_response(op: &dyn SpatialOperator, basis: &SpectralBasis) -> Vec<f64> {
    let (h, w) = (basis.height(), basis.width());
    let n = h * w;
    let mut a = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = op.apply(&TokenGrid::new(h, w, 1, e).unwrap()).unwrap();
        for i in 0..n {
            a[i][j] = col.data()[i];
        }
    }
    (0..basis.len())
        .map(|k| {
            let phi = basis.mode(k);
            (0..n).map(|i| phi[i] * (0..n).map(|j| a[i][j] * phi[j]).sum::<f64>()).sum()
        })
        .collect()
}
