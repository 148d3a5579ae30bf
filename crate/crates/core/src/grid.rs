//! Uniform Cartesian grids over a bounding box, 1D and 2D.
//!
//! Grid points sit at cell centers, so mass sums of indicator fields are exact
//! under midpoint quadrature. A 1D grid is stored as an `n x 1` lattice; all
//! index arithmetic is shared between dimensions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform cell-centered lattice over `[low, high]` per axis.
///
/// For `dim == 1` the second axis collapses to a single cell of extent 1 and
/// spacing 1, so `cell_volume` is the 1D spacing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dim: usize,
    /// Cells per axis; `n[1] == 1` when `dim == 1`.
    pub n: [usize; 2],
    pub low: [f64; 2],
    pub high: [f64; 2],
    /// Spacing per axis, exactly `(high - low) / n`.
    pub h: [f64; 2],
    pub cell_volume: f64,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flat index of the cell `(i0, i1)`.
    #[inline]
    pub fn idx(&self, i0: usize, i1: usize) -> usize {
        i0 * self.n[1] + i1
    }

    /// Physical coordinates of the center of cell `(i0, i1)`.
    #[inline]
    pub fn center(&self, i0: usize, i1: usize) -> [f64; 2] {
        [
            self.low[0] + (i0 as f64 + 0.5) * self.h[0],
            self.low[1] + (i1 as f64 + 0.5) * self.h[1],
        ]
    }

    /// Center coordinates of the cell with flat index `k`.
    #[inline]
    pub fn center_of(&self, k: usize) -> [f64; 2] {
        self.center(k / self.n[1], k % self.n[1])
    }

    /// Smallest spacing over the active axes.
    pub fn min_h(&self) -> f64 {
        if self.dim == 1 {
            self.h[0]
        } else {
            self.h[0].min(self.h[1])
        }
    }
}

/// Builds a cell-centered grid with `n_per_dim` cells per axis on the given box.
///
/// `box_per_dim` holds `[low, high]` for each active axis. Rejects `dim`
/// outside `{1, 2}`, fewer than 4 cells per axis, and degenerate boxes.
pub fn build_grid(dim: usize, n_per_dim: usize, box_per_dim: &[[f64; 2]]) -> Result<Grid> {
    if dim != 1 && dim != 2 {
        return Err(Error::Config(format!("dim must be 1 or 2, got {dim}")));
    }
    if box_per_dim.len() != dim {
        return Err(Error::Config(format!(
            "expected {dim} box intervals, got {}",
            box_per_dim.len()
        )));
    }
    if n_per_dim < 4 {
        return Err(Error::Config(format!(
            "need at least 4 cells per axis, got {n_per_dim}"
        )));
    }
    let mut low = [0.0; 2];
    let mut high = [0.0; 2];
    let mut h = [1.0; 2];
    let mut n = [1usize; 2];
    for (axis, b) in box_per_dim.iter().enumerate() {
        if b[1] <= b[0] || b[0].is_nan() || b[1].is_nan() {
            return Err(Error::Config(format!(
                "degenerate box on axis {axis}: [{}, {}]",
                b[0], b[1]
            )));
        }
        low[axis] = b[0];
        high[axis] = b[1];
        n[axis] = n_per_dim;
        h[axis] = (b[1] - b[0]) / n_per_dim as f64;
    }
    let cell_volume = if dim == 1 { h[0] } else { h[0] * h[1] };
    Ok(Grid {
        dim,
        n,
        low,
        high,
        h,
        cell_volume,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_centers_1d() {
        let g = build_grid(1, 8, &[[0.0, 1.0]]).unwrap();
        assert_eq!(g.h[0], 0.125);
        assert_eq!(g.cell_volume, 0.125);
        for k in 0..8 {
            assert_eq!(g.center(k, 0)[0], 0.0625 + k as f64 * 0.125);
        }
    }

    #[test]
    fn cell_volume_2d() {
        let g = build_grid(2, 32, &[[0.0, 1.0], [0.0, 1.0]]).unwrap();
        assert_eq!(g.cell_volume, (1.0 / 32.0) * (1.0 / 32.0));
        assert_eq!(g.len(), 1024);
    }

    #[test]
    fn point_count_256() {
        let g = build_grid(2, 256, &[[0.0, 1.0], [0.0, 1.0]]).unwrap();
        assert_eq!(g.len(), 65536);
    }

    #[test]
    fn flat_index_roundtrip() {
        let g = build_grid(2, 8, &[[0.0, 1.0], [0.0, 2.0]]).unwrap();
        for i0 in 0..8 {
            for i1 in 0..8 {
                let k = g.idx(i0, i1);
                assert_eq!(g.center_of(k), g.center(i0, i1));
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(build_grid(3, 8, &[[0.0, 1.0], [0.0, 1.0], [0.0, 1.0]]).is_err());
        assert!(build_grid(1, 3, &[[0.0, 1.0]]).is_err());
        assert!(build_grid(1, 8, &[[1.0, 1.0]]).is_err());
        assert!(build_grid(2, 8, &[[0.0, 1.0]]).is_err());
    }
}
