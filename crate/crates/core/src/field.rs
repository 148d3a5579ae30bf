//! Real-valued fields on a grid with a membership mask.
//!
//! The mask records which set the field lives on (the domain, the perforated
//! domain, a hole set). Values at masked-out points are kept exactly zero, so
//! a field doubles as its own extension by zero to the whole box.

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Values on grid points plus a boolean membership mask.
///
/// Invariant: `values[k] == 0.0` wherever `mask[k]` is false. Constructors and
/// mutating helpers maintain it; `assert_masked` checks it in debug builds.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedField {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl MaskedField {
    /// Zero field with the given mask.
    pub fn zeros(grid: &Grid, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "mask length {} does not match grid size {}",
                mask.len(),
                grid.len()
            )));
        }
        Ok(MaskedField {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
            mask,
        })
    }

    /// Zero field masked everywhere (full box membership).
    pub fn zeros_full(grid: &Grid) -> Self {
        MaskedField {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
            mask: vec![true; grid.len()],
        }
    }

    /// Field from raw values, zeroing any entry outside the mask.
    pub fn from_values(grid: &Grid, mut values: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        if values.len() != grid.len() || mask.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "values/mask length {}/{} does not match grid size {}",
                values.len(),
                mask.len(),
                grid.len()
            )));
        }
        for (v, &m) in values.iter_mut().zip(&mask) {
            if !m {
                *v = 0.0;
            }
        }
        Ok(MaskedField {
            grid: grid.clone(),
            values,
            mask,
        })
    }

    /// 0/1 field from a boolean mask (the indicator of the masked set).
    pub fn indicator(grid: &Grid, mask: Vec<bool>) -> Result<Self> {
        let values = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
        MaskedField::from_values(grid, values, mask)
    }

    /// Constant value on the mask, zero outside.
    pub fn constant(grid: &Grid, mask: Vec<bool>, c: f64) -> Result<Self> {
        let values = mask.iter().map(|&m| if m { c } else { 0.0 }).collect();
        MaskedField::from_values(grid, values, mask)
    }

    /// Fills masked points with `f(x)` evaluated at cell centers.
    pub fn fill_with(&mut self, f: impl Fn([f64; 2]) -> f64) {
        for k in 0..self.values.len() {
            if self.mask[k] {
                self.values[k] = f(self.grid.center_of(k));
            }
        }
    }

    /// Zeroes every value outside the mask.
    pub fn apply_mask(&mut self) {
        for (v, &m) in self.values.iter_mut().zip(&self.mask) {
            if !m {
                *v = 0.0;
            }
        }
    }

    /// Number of masked-in points.
    pub fn mask_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Discrete measure of the masked set.
    pub fn mask_measure(&self) -> f64 {
        self.mask_count() as f64 * self.grid.cell_volume
    }

    /// L2 norm over the whole box (off-mask values are zero, so this equals
    /// the norm over the masked set).
    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self.values.iter().map(|v| v * v).sum();
        (s * self.grid.cell_volume).sqrt()
    }

    /// Max absolute value.
    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// Checks that both fields share one grid.
    pub fn check_same_grid(&self, other: &MaskedField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(
                "fields live on different grids".to_string(),
            ));
        }
        Ok(())
    }

    /// Debug check of the zero-off-mask invariant.
    pub fn assert_masked(&self) {
        debug_assert!(
            self.values
                .iter()
                .zip(&self.mask)
                .all(|(v, &m)| m || *v == 0.0),
            "nonzero value outside mask"
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    #[test]
    fn from_values_zeroes_outside_mask() {
        let g = build_grid(1, 4, &[[0.0, 1.0]]).unwrap();
        let mask = vec![false, true, true, false];
        let f = MaskedField::from_values(&g, vec![9.0, 1.0, 2.0, 9.0], mask).unwrap();
        assert_eq!(f.values, vec![0.0, 1.0, 2.0, 0.0]);
        f.assert_masked();
    }

    #[test]
    fn indicator_and_measure() {
        let g = build_grid(1, 4, &[[0.0, 1.0]]).unwrap();
        let f = MaskedField::indicator(&g, vec![true, true, false, false]).unwrap();
        assert_eq!(f.values, vec![1.0, 1.0, 0.0, 0.0]);
        assert_eq!(f.mask_measure(), 0.5);
    }

    #[test]
    fn l2_norm_counts_cell_volume() {
        let g = build_grid(1, 4, &[[0.0, 1.0]]).unwrap();
        let f = MaskedField::constant(&g, vec![true; 4], 2.0).unwrap();
        assert!((f.l2_norm() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch_rejected() {
        let g = build_grid(1, 4, &[[0.0, 1.0]]).unwrap();
        assert!(MaskedField::zeros(&g, vec![true; 3]).is_err());
    }
}
