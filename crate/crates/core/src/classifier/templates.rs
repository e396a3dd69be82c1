//! Class templates for the synthetic predictors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TokenGrid;
use crate::rng::SeededRng;

/// Smooth shared background plus isolated detail tokens.
///
/// Every class shares the background `b·(1 + gradient·h/H)` with
/// `b_c ~ U[1, 2]` and the same detail sites, each carrying
/// `amplitude·(1 + jitter·z)·u` along one shared direction `u`; only the
/// per-site factors `z` differ between classes. No two detail sites touch,
/// diagonals included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpikeTemplates {
    pub spike_fraction: f64,
    pub amplitude: f64,
    pub jitter: f64,
    pub gradient: f64,
}

impl Default for SpikeTemplates {
    fn default() -> Self {
        Self {
            spike_fraction: 0.1,
            amplitude: 10.0,
            jitter: 0.03,
            gradient: 0.1,
        }
    }
}

/// `count` sites of an `height × width` grid, no two within Chebyshev
/// distance 1. Fails if random placement stalls.
pub fn isolated_sites(height: usize, width: usize, count: usize, rng: &mut SeededRng) -> Result<Vec<usize>> {
    let mut taken = vec![false; height * width];
    let mut sites = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while sites.len() < count {
        attempts += 1;
        if attempts > 1000 * (count + 1) {
            return Err(Error::config(
                "spike_fraction",
                format!("cannot place {count} isolated sites on {height}x{width}"),
            ));
        }
        let (i, j) = (rng.int_inclusive(0, height - 1), rng.int_inclusive(0, width - 1));
        let clash = (i.saturating_sub(1)..=(i + 1).min(height - 1))
            .any(|a| (j.saturating_sub(1)..=(j + 1).min(width - 1)).any(|b| taken[a * width + b]));
        if !clash {
            taken[i * width + j] = true;
            sites.push(i * width + j);
        }
    }
    sites.sort_unstable();
    Ok(sites)
}

impl SpikeTemplates {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.25).contains(&self.spike_fraction) {
            return Err(Error::config("templates.spike_fraction", "must lie in [0, 0.25]"));
        }
        for (field, v) in [
            ("templates.amplitude", self.amplitude),
            ("templates.jitter", self.jitter),
            ("templates.gradient", self.gradient),
        ] {
            if !v.is_finite() {
                return Err(Error::config(field, "must be finite"));
            }
        }
        Ok(())
    }

    /// One template per class.
    pub fn generate(
        &self,
        class_count: usize,
        shape: (usize, usize, usize),
        rng: &mut SeededRng,
    ) -> Result<Vec<TokenGrid>> {
        self.validate()?;
        let (h, w, c) = shape;
        if h == 0 || w == 0 || c == 0 {
            return Err(Error::dim(format!("template shape {h}x{w}x{c}")));
        }
        let base: Vec<f64> = (0..c).map(|_| rng.uniform_range(1.0, 2.0)).collect();
        let dir = rng.normal_vec(c);
        let count = (self.spike_fraction * (h * w) as f64) as usize;
        let sites = isolated_sites(h, w, count, rng)?;
        let mut factor = vec![0.0; h * w];
        (0..class_count)
            .map(|_| {
                for &s in &sites {
                    factor[s] = self.amplitude * (1.0 + self.jitter * rng.normal());
                }
                TokenGrid::from_fn(h, w, c, |i, j, ch| {
                    base[ch] * (1.0 + self.gradient * i as f64 / h as f64) + factor[i * w + j] * dir[ch]
                })
            })
            .collect()
    }
}

/// Class templates built from the lowest `modes` zigzag DCT modes with
/// `N(0, amplitude²)` coefficients per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmoothTemplates {
    pub modes: usize,
    pub amplitude: f64,
}

impl Default for SmoothTemplates {
    fn default() -> Self {
        Self { modes: 6, amplitude: 2.0 }
    }
}

impl SmoothTemplates {
    pub fn generate(
        &self,
        class_count: usize,
        shape: (usize, usize, usize),
        rng: &mut SeededRng,
    ) -> Result<Vec<TokenGrid>> {
        let (h, w, c) = shape;
        let basis = crate::spectral::dct_basis(h, w)?;
        if self.modes == 0 || self.modes > basis.len() {
            return Err(Error::config(
                "templates.modes",
                format!("{} not in 1..={}", self.modes, basis.len()),
            ));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::config("templates.amplitude", "must be finite"));
        }
        (0..class_count)
            .map(|_| {
                let fields = (0..c)
                    .map(|_| {
                        let mut coeffs = vec![0.0; basis.len()];
                        for a in &mut coeffs[..self.modes] {
                            *a = self.amplitude * rng.normal();
                        }
                        basis.synthesize(&coeffs)
                    })
                    .collect::<Result<Vec<_>>>()?;
                TokenGrid::from_fn(h, w, c, |i, j, ch| fields[ch][i * w + j])
            })
            .collect()
    }
}
