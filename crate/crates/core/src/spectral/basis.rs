//! Orthonormal 2-D DCT-II modes in zigzag order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TokenGrid;

/// Modes `φ_k` over an `H × W` grid, `k = 0` being the constant mode.
/// Modes are ordered by `u + v`, then by the row frequency `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralBasis {
    height: usize,
    width: usize,
    frequencies: Vec<(usize, usize)>,
    modes: Vec<Vec<f64>>,
}

fn dct_vector(n: usize, u: usize) -> Vec<f64> {
    let scale = if u == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
    (0..n)
        .map(|i| scale * (std::f64::consts::PI * (2 * i + 1) as f64 * u as f64 / (2 * n) as f64).cos())
        .collect()
}

pub fn dct_basis(height: usize, width: usize) -> Result<SpectralBasis> {
    if height == 0 || width == 0 {
        return Err(Error::dim(format!("basis over a {height}x{width} grid")));
    }
    let mut frequencies: Vec<(usize, usize)> =
        (0..height).flat_map(|u| (0..width).map(move |v| (u, v))).collect();
    frequencies.sort_by_key(|&(u, v)| (u + v, u));
    let rows: Vec<Vec<f64>> = (0..height).map(|u| dct_vector(height, u)).collect();
    let cols: Vec<Vec<f64>> = (0..width).map(|v| dct_vector(width, v)).collect();
    let modes = frequencies
        .iter()
        .map(|&(u, v)| {
            rows[u]
                .iter()
                .flat_map(|a| cols[v].iter().map(move |b| a * b))
                .collect()
        })
        .collect();
    Ok(SpectralBasis {
        height,
        width,
        frequencies,
        modes,
    })
}

impl SpectralBasis {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of modes, `H·W`.
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Row-major `H·W` samples of `φ_k`.
    pub fn mode(&self, k: usize) -> &[f64] {
        &self.modes[k]
    }

    /// `(u, v)` frequency pair of `φ_k`.
    pub fn frequency(&self, k: usize) -> (usize, usize) {
        self.frequencies[k]
    }

    /// `φ_k` as a single-channel grid.
    pub fn mode_grid(&self, k: usize) -> TokenGrid {
        TokenGrid::new(self.height, self.width, 1, self.modes[k].clone()).expect("finite basis")
    }

    /// Coefficients `⟨f, φ_k⟩` of a single-channel field.
    pub fn project(&self, field: &[f64]) -> Result<Vec<f64>> {
        if field.len() != self.height * self.width {
            return Err(Error::dim(format!(
                "field of {} samples against a {}x{} basis",
                field.len(),
                self.height,
                self.width
            )));
        }
        Ok(self.modes.iter().map(|m| crate::score::dot(m, field)).collect())
    }

    /// Per-channel coefficients of a grid, indexed `[channel][k]`.
    pub fn project_grid(&self, grid: &TokenGrid) -> Result<Vec<Vec<f64>>> {
        if (grid.height(), grid.width()) != (self.height, self.width) {
            return Err(Error::dim(format!(
                "{}x{} grid against a {}x{} basis",
                grid.height(),
                grid.width(),
                self.height,
                self.width
            )));
        }
        let c = grid.channels();
        (0..c)
            .map(|ch| {
                let field: Vec<f64> = grid.data().iter().skip(ch).step_by(c).copied().collect();
                self.project(&field)
            })
            .collect()
    }

    /// Inverse of [`SpectralBasis::project`].
    pub fn synthesize(&self, coefficients: &[f64]) -> Result<Vec<f64>> {
        if coefficients.len() != self.len() {
            return Err(Error::dim("coefficient count differs from the basis size"));
        }
        let mut out = vec![0.0; self.len()];
        for (a, m) in coefficients.iter().zip(&self.modes) {
            for (o, v) in out.iter_mut().zip(m) {
                *o += a * v;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_basis() {
        let b = dct_basis(1, 1).unwrap();
        assert_eq!(b.len(), 1);
        assert!((b.mode(0)[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zigzag_order_and_dc() {
        let b = dct_basis(3, 3).unwrap();
        let f: Vec<_> = (0..5).map(|k| b.frequency(k)).collect();
        assert_eq!(f, vec![(0, 0), (0, 1), (1, 0), (0, 2), (1, 1)]);
        let dc = b.mode(0);
        assert!(dc.iter().all(|v| (v - dc[0]).abs() < 1e-15));
    }

    #[test]
    fn project_then_synthesize() {
        let b = dct_basis(2, 3).unwrap();
        let f = vec![1.0, -2.0, 0.5, 3.0, 0.0, 4.0];
        let back = b.synthesize(&b.project(&f).unwrap()).unwrap();
        for (x, y) in f.iter().zip(back) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(dct_basis(0, 2).is_err());
    }
}
