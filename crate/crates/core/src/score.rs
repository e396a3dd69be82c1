//! Per-token frequency and salience scores.
//!
//! Ten heuristics are supported. For all of them except the two cosine
//! scores, a larger value marks a detail-rich token; the cosine scores are
//! inverted (a token that disagrees with its surroundings scores low).

use std::fmt;
use std::str::FromStr;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ChannelReduce, FrequencyMap, TokenGrid};

/// Border rule for the 3×3 Laplacian stencil.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// Clamp-to-edge.
    #[default]
    Replicate,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringMethod {
    GlobalMeanDeviation,
    L1Norm,
    L2Norm,
    ChannelVariance,
    LaplacianL1,
    LaplacianL2,
    DftSpectralCentroid,
    DftTotalAmplitude,
    CosineToNeighbors,
    CosineToGlobalMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorePolarity {
    HigherIsDetail,
    LowerIsDetail,
}

impl ScoringMethod {
    pub const ALL: [ScoringMethod; 10] = [
        ScoringMethod::GlobalMeanDeviation,
        ScoringMethod::L1Norm,
        ScoringMethod::L2Norm,
        ScoringMethod::ChannelVariance,
        ScoringMethod::LaplacianL1,
        ScoringMethod::LaplacianL2,
        ScoringMethod::DftSpectralCentroid,
        ScoringMethod::DftTotalAmplitude,
        ScoringMethod::CosineToNeighbors,
        ScoringMethod::CosineToGlobalMean,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScoringMethod::GlobalMeanDeviation => "global_mean_deviation",
            ScoringMethod::L1Norm => "l1_norm",
            ScoringMethod::L2Norm => "l2_norm",
            ScoringMethod::ChannelVariance => "channel_variance",
            ScoringMethod::LaplacianL1 => "laplacian_l1",
            ScoringMethod::LaplacianL2 => "laplacian_l2",
            ScoringMethod::DftSpectralCentroid => "dft_spectral_centroid",
            ScoringMethod::DftTotalAmplitude => "dft_total_amplitude",
            ScoringMethod::CosineToNeighbors => "cosine_to_neighbors",
            ScoringMethod::CosineToGlobalMean => "cosine_to_global_mean",
        }
    }

    pub fn polarity(self) -> ScorePolarity {
        match self {
            ScoringMethod::CosineToNeighbors | ScoringMethod::CosineToGlobalMean => {
                ScorePolarity::LowerIsDetail
            }
            _ => ScorePolarity::HigherIsDetail,
        }
    }
}

impl fmt::Display for ScoringMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScoringMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScoringMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config("method", format!("unknown scoring method `{s}`")))
    }
}

/// Applies `[[0,1,0],[1,-4,1],[0,1,0]]` to every channel.
pub fn laplacian_filter(grid: &TokenGrid, padding: Padding) -> TokenGrid {
    let (hh, ww, cc) = (grid.height(), grid.width(), grid.channels());
    let fetch = |h: isize, w: isize, c: usize| -> f64 {
        let inside = h >= 0 && w >= 0 && (h as usize) < hh && (w as usize) < ww;
        match (inside, padding) {
            (true, _) => grid.get(h as usize, w as usize, c),
            (false, Padding::Zero) => 0.0,
            (false, Padding::Replicate) => grid.get(
                h.clamp(0, hh as isize - 1) as usize,
                w.clamp(0, ww as isize - 1) as usize,
                c,
            ),
        }
    };
    let mut out = Vec::with_capacity(grid.data().len());
    for h in 0..hh as isize {
        for w in 0..ww as isize {
            for c in 0..cc {
                let center = grid.get(h as usize, w as usize, c);
                out.push(
                    fetch(h - 1, w, c) + fetch(h + 1, w, c) + fetch(h, w - 1, c) + fetch(h, w + 1, c)
                        - 4.0 * center,
                );
            }
        }
    }
    TokenGrid::new(hh, ww, cc, out).expect("same shape as input")
}

/// Scores every site of `grid` with `method`, using replicate padding for the
/// Laplacian variants.
pub fn score_tokens(grid: &TokenGrid, method: ScoringMethod) -> Result<FrequencyMap> {
    score_tokens_with(grid, method, Padding::Replicate)
}

pub fn score_tokens_with(
    grid: &TokenGrid,
    method: ScoringMethod,
    padding: Padding,
) -> Result<FrequencyMap> {
    let (hh, ww) = (grid.height(), grid.width());
    let tokens = || grid.data().chunks_exact(grid.channels());
    let scores: Vec<f64> = match method {
        ScoringMethod::GlobalMeanDeviation => {
            let mean = global_mean(grid);
            tokens().map(|t| norm2(&sub(t, &mean))).collect()
        }
        ScoringMethod::L1Norm => tokens().map(|t| t.iter().map(|v| v.abs()).sum()).collect(),
        ScoringMethod::L2Norm => tokens().map(norm2).collect(),
        ScoringMethod::ChannelVariance => tokens()
            .map(|t| {
                let n = t.len() as f64;
                let m = t.iter().sum::<f64>() / n;
                t.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n
            })
            .collect(),
        ScoringMethod::LaplacianL1 | ScoringMethod::LaplacianL2 => {
            let mode = if method == ScoringMethod::LaplacianL1 {
                ChannelReduce::MeanAbs
            } else {
                ChannelReduce::L2
            };
            let filtered = laplacian_filter(grid, padding);
            filtered
                .data()
                .chunks_exact(grid.channels())
                .map(|t| mode.apply(t))
                .collect()
        }
        ScoringMethod::DftSpectralCentroid | ScoringMethod::DftTotalAmplitude => {
            let mags = channel_dft_magnitudes(grid);
            mags.chunks_exact(grid.channels())
                .map(|m| {
                    let total: f64 = m.iter().sum();
                    if method == ScoringMethod::DftTotalAmplitude {
                        total
                    } else if total == 0.0 {
                        // all-zero token carries no spectrum
                        0.0
                    } else {
                        m.iter()
                            .enumerate()
                            .map(|(k, a)| (k + 1) as f64 * a)
                            .sum::<f64>()
                            / total
                    }
                })
                .collect()
        }
        ScoringMethod::CosineToNeighbors => {
            let mut out = Vec::with_capacity(hh * ww);
            for h in 0..hh {
                for w in 0..ww {
                    let x = grid.token(h, w);
                    let nx = norm2(x);
                    let mut acc = 0.0;
                    let mut count = 0usize;
                    for (dh, dw) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
                        let (ph, pw) = (h as isize + dh, w as isize + dw);
                        if ph < 0 || pw < 0 || ph as usize >= hh || pw as usize >= ww {
                            continue;
                        }
                        let y = grid.token(ph as usize, pw as usize);
                        let ny = norm2(y);
                        if nx == 0.0 || ny == 0.0 {
                            return Err(Error::ZeroNorm(format!(
                                "cosine_to_neighbors at site ({h}, {w})"
                            )));
                        }
                        acc += dot(x, y) / (nx * ny);
                        count += 1;
                    }
                    // a 1x1 grid has no neighbours; treat it as perfectly coherent
                    out.push(if count == 0 { 1.0 } else { acc / count as f64 });
                }
            }
            out
        }
        ScoringMethod::CosineToGlobalMean => {
            let mean = global_mean(grid);
            let nm = norm2(&mean);
            if nm == 0.0 {
                return Err(Error::ZeroNorm("cosine_to_global_mean: global mean".into()));
            }
            let mut out = Vec::with_capacity(hh * ww);
            for (i, t) in tokens().enumerate() {
                let nt = norm2(t);
                if nt == 0.0 {
                    return Err(Error::ZeroNorm(format!(
                        "cosine_to_global_mean at token {i}"
                    )));
                }
                out.push(dot(t, &mean) / (nt * nm));
            }
            out
        }
    };
    FrequencyMap::new(hh, ww, scores)
}

/// Ranks sites from most to least detailed. Ties keep ascending row-major
/// index order.
pub fn detail_rank(map: &FrequencyMap, polarity: ScorePolarity) -> Vec<usize> {
    let scores = map.scores();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    match polarity {
        ScorePolarity::HigherIsDetail => {
            order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        }
        ScorePolarity::LowerIsDetail => {
            order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
        }
    }
    order
}

fn global_mean(grid: &TokenGrid) -> Vec<f64> {
    let mut mean = vec![0.0; grid.channels()];
    for t in grid.data().chunks_exact(grid.channels()) {
        for (m, v) in mean.iter_mut().zip(t) {
            *m += v;
        }
    }
    let n = grid.sites() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// Moduli of the unnormalised forward DFT along the channel axis, laid out
/// like the grid.
fn channel_dft_magnitudes(grid: &TokenGrid) -> Vec<f64> {
    let c = grid.channels();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(c);
    let mut buf: Vec<Complex<f64>> = grid.data().iter().map(|&v| Complex::new(v, 0.0)).collect();
    // buffer length is a multiple of c, so this transforms every token
    fft.process(&mut buf);
    buf.iter().map(|z| z.norm()).collect()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
