//! Interpolate-extrapolate downsampling of key/value grids.
//!
//! Output site `(i, j)` covers the window of rows `i·s .. i·s+s` and columns
//! `j·s .. j·s+s`, truncated at the grid border, and is
//! `α·Z[nearest] + (1 − α)·mean(window)`. `α` may leave `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TokenGrid;

/// Which window element plays the nearest-neighbour sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NearestAnchor {
    /// Offset `(⌊s/2⌋, ⌊s/2⌋)` from the window origin, clamped in-bounds.
    #[default]
    Center,
    TopLeft,
}

pub fn downsampled_dims(height: usize, width: usize, s: usize) -> (usize, usize) {
    (height.div_ceil(s), width.div_ceil(s))
}

pub fn ie_kvd_downsample(grid: &TokenGrid, s: usize, alpha: f64, anchor: NearestAnchor) -> Result<TokenGrid> {
    if s == 0 {
        return Err(Error::config("downsample_factor", "must be positive"));
    }
    if !alpha.is_finite() {
        return Err(Error::config("alpha", "must be finite"));
    }
    if s == 1 {
        return Ok(grid.clone());
    }
    let (hh, ww, cc) = (grid.height(), grid.width(), grid.channels());
    let (oh, ow) = downsampled_dims(hh, ww, s);
    let offset = match anchor {
        NearestAnchor::Center => s / 2,
        NearestAnchor::TopLeft => 0,
    };
    let mut out = Vec::with_capacity(oh * ow * cc);
    let mut mean = vec![0.0; cc];
    for i in 0..oh {
        let (h0, h1) = (i * s, (i * s + s).min(hh));
        let nh = (h0 + offset).min(hh - 1);
        for j in 0..ow {
            let (w0, w1) = (j * s, (j * s + s).min(ww));
            let nw = (w0 + offset).min(ww - 1);
            mean.iter_mut().for_each(|m| *m = 0.0);
            for h in h0..h1 {
                for w in w0..w1 {
                    for (m, v) in mean.iter_mut().zip(grid.token(h, w)) {
                        *m += v;
                    }
                }
            }
            let inv = 1.0 / ((h1 - h0) * (w1 - w0)) as f64;
            for (m, v) in mean.iter().zip(grid.token(nh, nw)) {
                out.push(alpha * v + (1.0 - alpha) * (m * inv));
            }
        }
    }
    TokenGrid::new(oh, ow, cc, out)
}

/// Nearest-neighbour upsampling of a factor-`s` downsampled grid back to
/// `height × width`: site `(h, w)` reads `(h / s, w / s)`.
pub fn nearest_upsample(small: &TokenGrid, s: usize, height: usize, width: usize) -> Result<TokenGrid> {
    if s == 0 || downsampled_dims(height, width, s) != (small.height(), small.width()) {
        return Err(Error::dim(format!(
            "{}x{} is not the factor-{s} reduction of {height}x{width}",
            small.height(),
            small.width()
        )));
    }
    TokenGrid::from_fn(height, width, small.channels(), |h, w, c| small.get(h / s, w / s, c))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_two() -> TokenGrid {
        TokenGrid::new(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap()
    }

    #[test]
    fn blend_arithmetic() {
        let out = ie_kvd_downsample(&two_by_two(), 2, 0.9, NearestAnchor::Center).unwrap();
        assert_eq!(out.height(), 1);
        assert!((out.data()[0] - 3.85).abs() < 1e-14);
    }

    #[test]
    fn endpoints() {
        let avg = ie_kvd_downsample(&two_by_two(), 2, 0.0, NearestAnchor::Center).unwrap();
        assert_eq!(avg.data(), &[2.5]);
        let near = ie_kvd_downsample(&two_by_two(), 2, 1.0, NearestAnchor::Center).unwrap();
        assert_eq!(near.data(), &[4.0]);
        let tl = ie_kvd_downsample(&two_by_two(), 2, 1.0, NearestAnchor::TopLeft).unwrap();
        assert_eq!(tl.data(), &[1.0]);
    }

    #[test]
    fn extrapolation_beyond_one() {
        let out = ie_kvd_downsample(&two_by_two(), 2, 1.2, NearestAnchor::Center).unwrap();
        assert!((out.data()[0] - (1.2 * 4.0 - 0.2 * 2.5)).abs() < 1e-14);
    }

    #[test]
    fn ragged_borders_are_truncated() {
        let grid = TokenGrid::from_fn(3, 3, 1, |h, w, _| (h * 3 + w) as f64).unwrap();
        let out = ie_kvd_downsample(&grid, 2, 0.0, NearestAnchor::Center).unwrap();
        assert_eq!((out.height(), out.width()), (2, 2));
        // windows {0,1,3,4} {2,5} {6,7} {8}
        assert_eq!(out.data(), &[2.0, 3.5, 6.5, 8.0]);
        // the centre anchor of the last window clamps onto its only element
        let near = ie_kvd_downsample(&grid, 2, 1.0, NearestAnchor::Center).unwrap();
        assert_eq!(near.data(), &[4.0, 5.0, 7.0, 8.0]);
    }

    #[test]
    fn factor_one_is_identity() {
        let g = two_by_two();
        assert_eq!(ie_kvd_downsample(&g, 1, 0.3, NearestAnchor::Center).unwrap(), g);
    }

    #[test]
    fn upsample_shape_check() {
        let small = TokenGrid::zeros(2, 2, 1).unwrap();
        assert!(nearest_upsample(&small, 2, 4, 3).is_ok());
        assert!(nearest_upsample(&small, 2, 5, 4).is_err());
    }
}
