//! Dense token containers.
//!
//! Storage is row-major `(h, w, c)` everywhere: element `(h, w, c)` lives at
//! `(h * W + w) * C + c`, and the flat token index of site `(h, w)` is
//! `h * W + w`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_finite(data: &[f64]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

/// An `H × W × C` field of tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenGrid {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl TokenGrid {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::dim(format!(
                "grid dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::dim(format!(
                "grid {height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        check_finite(&data)?;
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::new(height, width, channels, vec![0.0; height * width * channels])
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    /// Builds a grid from a closure over `(h, w, c)`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for h in 0..height {
            for w in 0..width {
                for c in 0..channels {
                    data.push(f(h, w, c));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of spatial sites, `H·W`.
    pub fn sites(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, h: usize, w: usize, c: usize) -> f64 {
        self.data[(h * self.width + w) * self.channels + c]
    }

    /// Channel vector of site `(h, w)`.
    #[inline]
    pub fn token(&self, h: usize, w: usize) -> &[f64] {
        let start = (h * self.width + w) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn same_shape(&self, other: &TokenGrid) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    /// Elementwise `a·self + b·other`.
    pub fn axpby(&self, a: f64, other: &TokenGrid, b: f64) -> Result<TokenGrid> {
        if !self.same_shape(other) {
            return Err(Error::dim("axpby on grids of different shape"));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| a * x + b * y)
            .collect();
        TokenGrid::new(self.height, self.width, self.channels, data)
    }

    pub fn squared_distance(&self, other: &TokenGrid) -> Result<f64> {
        if !self.same_shape(other) {
            return Err(Error::dim("distance between grids of different shape"));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| (x - y) * (x - y))
            .sum())
    }

    pub fn to_sequence(&self) -> TokenSequence {
        TokenSequence {
            count: self.sites(),
            channels: self.channels,
            data: self.data.clone(),
        }
    }

    pub fn into_sequence(self) -> TokenSequence {
        TokenSequence {
            count: self.height * self.width,
            channels: self.channels,
            data: self.data,
        }
    }
}

/// `N` tokens of `C` channels each, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenSequence {
    count: usize,
    channels: usize,
    data: Vec<f64>,
}

impl TokenSequence {
    pub fn new(count: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if count == 0 || channels == 0 {
            return Err(Error::dim(format!(
                "sequence dimensions must be positive, got {count}x{channels}"
            )));
        }
        if data.len() != count * channels {
            return Err(Error::dim(format!(
                "sequence {count}x{channels} needs {} values, got {}",
                count * channels,
                data.len()
            )));
        }
        check_finite(&data)?;
        Ok(Self {
            count,
            channels,
            data,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let channels = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != channels) {
            return Err(Error::dim("ragged rows"));
        }
        Self::new(rows.len(), channels, rows.concat())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.channels..(i + 1) * self.channels]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.channels)
    }

    /// Reinterprets the sequence as an `H × W` grid; element `(h, w, c)` is
    /// sequence element `(h·W + w, c)`.
    pub fn to_grid(&self, height: usize, width: usize) -> Result<TokenGrid> {
        self.clone().into_grid(height, width)
    }

    pub fn into_grid(self, height: usize, width: usize) -> Result<TokenGrid> {
        if height * width != self.count {
            return Err(Error::dim(format!(
                "cannot reshape {} tokens to {height}x{width}",
                self.count
            )));
        }
        Ok(TokenGrid {
            height,
            width,
            channels: self.channels,
            data: self.data,
        })
    }
}

/// Channel-wise aggregation used to collapse a per-channel field to a scalar
/// per site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelReduce {
    /// `(1/C)·Σ_c |x_c|`
    MeanAbs,
    /// `sqrt((1/C)·Σ_c x_c²)`, root-mean-square.
    L2,
}

impl ChannelReduce {
    pub fn apply(self, values: &[f64]) -> f64 {
        let n = values.len() as f64;
        match self {
            ChannelReduce::MeanAbs => values.iter().map(|v| v.abs()).sum::<f64>() / n,
            ChannelReduce::L2 => (values.iter().map(|v| v * v).sum::<f64>() / n).sqrt(),
        }
    }
}

/// An `H × W` scalar field, one value per site in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyMap {
    height: usize,
    width: usize,
    scores: Vec<f64>,
}

impl FrequencyMap {
    pub fn new(height: usize, width: usize, scores: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::dim("score map dimensions must be positive"));
        }
        if scores.len() != height * width {
            return Err(Error::dim(format!(
                "score map {height}x{width} needs {} values, got {}",
                height * width,
                scores.len()
            )));
        }
        check_finite(&scores)?;
        Ok(Self {
            height,
            width,
            scores,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    #[inline]
    pub fn get(&self, h: usize, w: usize) -> f64 {
        self.scores[h * self.width + w]
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Collapses the channel axis of `grid` with `mode`.
pub fn reduce_channels(grid: &TokenGrid, mode: ChannelReduce) -> FrequencyMap {
    let scores = grid
        .data()
        .chunks_exact(grid.channels())
        .map(|t| mode.apply(t))
        .collect();
    FrequencyMap {
        height: grid.height(),
        width: grid.width(),
        scores,
    }
}
