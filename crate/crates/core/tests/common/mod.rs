#![allow(dead_code)]

use nalgebra::linalg::SymmetricEigen;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nlhom_core::field::MaskedField;
use nlhom_core::grid::Grid;
use nlhom_core::kernel::KernelStencil;

/// Flat indices of the active cells, in row-major order.
pub fn support_cells(support: &[bool]) -> Vec<usize> {
    support
        .iter()
        .enumerate()
        .filter_map(|(k, &m)| m.then_some(k))
        .collect()
}

/// Dense matrix of `A u = h u - J * u` restricted to the active cells.
///
/// Row and column `r` correspond to `cells[r]`; the returned matrix is
/// symmetric because the stencil is even.
pub fn dense_operator(
    grid: &Grid,
    j: &KernelStencil,
    h: &[f64],
    support: &[bool],
) -> (Vec<usize>, DMatrix<f64>) {
    let cells = support_cells(support);
    let cv = grid.cell_volume;
    let m = cells.len();
    let mut a = DMatrix::zeros(m, m);
    for (r, &kr) in cells.iter().enumerate() {
        let (r0, r1) = (kr / grid.n[1], kr % grid.n[1]);
        for (c, &kc) in cells.iter().enumerate() {
            let (c0, c1) = (kc / grid.n[1], kc % grid.n[1]);
            let off = [r0 as i64 - c0 as i64, r1 as i64 - c1 as i64];
            let mut v = -j.weight_at(off) * cv;
            if r == c {
                v += h[kr];
            }
            a[(r, c)] = v;
        }
    }
    (cells, a)
}

/// Smallest eigenvalue of a symmetric matrix by full dense decomposition.
pub fn min_symmetric_eigenvalue(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(a.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// `exp(-t A) u0` for symmetric `A`, via the full eigendecomposition.
pub fn expm_neg(a: &DMatrix<f64>, t: f64, u0: &DVector<f64>) -> DVector<f64> {
    let eig = SymmetricEigen::new(a.clone());
    let y = eig.eigenvectors.transpose() * u0;
    let scaled = DVector::from_iterator(
        y.len(),
        y.iter()
            .zip(eig.eigenvalues.iter())
            .map(|(v, l)| v * (-t * l).exp()),
    );
    &eig.eigenvectors * scaled
}

/// Masked field with independent uniform values in `[lo, hi)` on the mask.
pub fn random_field(grid: &Grid, mask: Vec<bool>, seed: u64, lo: f64, hi: f64) -> MaskedField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..grid.len()).map(|_| rng.gen_range(lo..hi)).collect();
    MaskedField::from_values(grid, values, mask).unwrap()
}

/// Max-norm distance between two fields, relative to the max norm of `b`.
pub fn rel_linf(a: &MaskedField, b: &MaskedField) -> f64 {
    let gap = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    gap / b.linf_norm().max(1e-300)
}

/// Plain max-norm distance between two fields.
pub fn linf_gap(a: &MaskedField, b: &MaskedField) -> f64 {
    a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
