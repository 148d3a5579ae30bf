//! Domains, perforations, and the effective material density.
//!
//! The domain is a shape strictly inside the grid box, with a padding margin
//! at least the kernel support radius so that extension by zero represents
//! the exterior condition exactly. Perforations remove balls from the domain;
//! the effective density measures the remaining material fraction, either by
//! the closed-form periodic value or by a moving cell average.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::MaskedField;
use crate::grid::Grid;
use crate::kernel::convolve;
use crate::nonlinearity::ball_stencil;

/// Domain shape placed inside the grid box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainShape {
    /// Axis-aligned square (interval in 1D) of the given half width.
    Square { center: [f64; 2], half_width: f64 },
    /// Disk (interval in 1D) of the given radius.
    Disk { center: [f64; 2], radius: f64 },
}

impl DomainShape {
    /// Strict interior membership; used for grid-cell classification.
    pub fn contains(&self, dim: usize, x: [f64; 2]) -> bool {
        match *self {
            DomainShape::Square { center, half_width } => {
                (0..dim).all(|a| (x[a] - center[a]).abs() < half_width)
            }
            DomainShape::Disk { center, radius } => {
                let mut r2 = 0.0;
                for a in 0..dim {
                    r2 += (x[a] - center[a]) * (x[a] - center[a]);
                }
                r2 < radius * radius
            }
        }
    }

    /// Closed membership; used for perforation lattice centers so boundary
    /// balls contribute their interior part.
    pub fn contains_closed(&self, dim: usize, x: [f64; 2]) -> bool {
        match *self {
            DomainShape::Square { center, half_width } => {
                (0..dim).all(|a| (x[a] - center[a]).abs() <= half_width)
            }
            DomainShape::Disk { center, radius } => {
                let mut r2 = 0.0;
                for a in 0..dim {
                    r2 += (x[a] - center[a]) * (x[a] - center[a]);
                }
                r2 <= radius * radius
            }
        }
    }

    /// Bounding interval `[low, high]` on one axis.
    pub fn bounds(&self, axis: usize) -> [f64; 2] {
        match *self {
            DomainShape::Square { center, half_width } => {
                [center[axis] - half_width, center[axis] + half_width]
            }
            DomainShape::Disk { center, radius } => [center[axis] - radius, center[axis] + radius],
        }
    }
}

/// Hole pattern removed from the domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerforationSpec {
    /// No holes.
    None,
    /// Balls of radius `radius_ratio * eps` centered on the lattice of pitch
    /// `2 * eps`, restricted to the domain.
    PeriodicBalls { eps: f64, radius_ratio: f64 },
    /// `count` balls of fixed radius with centers drawn uniformly from the
    /// domain, reproducibly from `rng_seed`.
    RandomBalls {
        count: usize,
        radius: f64,
        rng_seed: u64,
    },
}

impl PerforationSpec {
    fn validate(&self) -> Result<()> {
        match *self {
            PerforationSpec::None => Ok(()),
            PerforationSpec::PeriodicBalls { eps, radius_ratio } => {
                if eps <= 0.0 {
                    return Err(Error::Config(format!(
                        "perforation eps must be > 0, got {eps}"
                    )));
                }
                if !(radius_ratio > 0.0 && radius_ratio < 1.0) {
                    return Err(Error::Config(format!(
                        "radius_ratio must lie in (0, 1), got {radius_ratio}"
                    )));
                }
                Ok(())
            }
            PerforationSpec::RandomBalls { count, radius, .. } => {
                if count == 0 || radius <= 0.0 {
                    return Err(Error::Config(
                        "random perforation needs count >= 1 and radius > 0".to_string(),
                    ));
                }
                Ok(())
            }
        }
    }
}

/// Builds the domain indicator on the grid.
///
/// Requires a padding margin of at least `support_radius` between the shape
/// and every box face, so convolutions never reach around the domain.
pub fn domain_mask(grid: &Grid, shape: &DomainShape, support_radius: f64) -> Result<MaskedField> {
    for axis in 0..grid.dim {
        let b = shape.bounds(axis);
        let margin = (b[0] - grid.low[axis]).min(grid.high[axis] - b[1]);
        if margin < support_radius {
            return Err(Error::Config(format!(
                "domain too close to the box boundary on axis {axis}: margin {margin:.6} < required {support_radius:.6}"
            )));
        }
    }
    let mask: Vec<bool> = (0..grid.len())
        .map(|k| shape.contains(grid.dim, grid.center_of(k)))
        .collect();
    if !mask.iter().any(|&m| m) {
        return Err(Error::Config("domain contains no grid cells".to_string()));
    }
    MaskedField::indicator(grid, mask)
}

fn ball_centers(
    grid: &Grid,
    shape: &DomainShape,
    spec: &PerforationSpec,
) -> Result<Vec<([f64; 2], f64)>> {
    match *spec {
        PerforationSpec::None => Ok(Vec::new()),
        PerforationSpec::PeriodicBalls { eps, radius_ratio } => {
            let pitch = 2.0 * eps;
            let radius = radius_ratio * eps;
            let mut centers = Vec::new();
            let range = |axis: usize| -> (i64, i64) {
                let b = shape.bounds(axis);
                ((b[0] / pitch).floor() as i64, (b[1] / pitch).ceil() as i64)
            };
            let (lo0, hi0) = range(0);
            let (lo1, hi1) = if grid.dim == 2 { range(1) } else { (0, 0) };
            for m0 in lo0..=hi0 {
                for m1 in lo1..=hi1 {
                    let c = [m0 as f64 * pitch, m1 as f64 * pitch];
                    if shape.contains_closed(grid.dim, c) {
                        centers.push((c, radius));
                    }
                }
            }
            Ok(centers)
        }
        PerforationSpec::RandomBalls {
            count,
            radius,
            rng_seed,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            let mut centers = Vec::with_capacity(count);
            let b0 = shape.bounds(0);
            let b1 = if grid.dim == 2 {
                shape.bounds(1)
            } else {
                [0.0, 1.0]
            };
            let mut attempts = 0usize;
            while centers.len() < count {
                attempts += 1;
                if attempts > 10_000 * count {
                    return Err(Error::Config(
                        "random perforation sampling failed to place centers in the domain"
                            .to_string(),
                    ));
                }
                let c = [
                    rng.gen_range(b0[0]..b0[1]),
                    if grid.dim == 2 {
                        rng.gen_range(b1[0]..b1[1])
                    } else {
                        0.5
                    },
                ];
                if shape.contains_closed(grid.dim, c) {
                    centers.push((c, radius));
                }
            }
            Ok(centers)
        }
    }
}

/// Removes the perforation balls from the domain.
///
/// Returns the material indicator (domain minus holes) and the hole
/// indicator; the two sum to the domain indicator exactly. A grid cell is
/// removed when its center lies strictly inside some ball. The uniform
/// coverage bound is then verified: every domain point must see at least
/// `coverage_floor` of material measure within the averaging radius `delta`.
pub fn perforate(
    grid: &Grid,
    chi_omega: &MaskedField,
    shape: &DomainShape,
    spec: &PerforationSpec,
    delta: f64,
    coverage_floor: f64,
) -> Result<(MaskedField, MaskedField)> {
    spec.validate()?;
    let centers = ball_centers(grid, shape, spec)?;
    let mut material = chi_omega.mask.clone();
    match *spec {
        PerforationSpec::PeriodicBalls { eps, .. } => {
            // r < eps, so a point can lie inside at most the ball at the
            // componentwise-nearest lattice site.
            let pitch = 2.0 * eps;
            let radius = match *spec {
                PerforationSpec::PeriodicBalls { radius_ratio, .. } => radius_ratio * eps,
                _ => unreachable!(),
            };
            for (k, cell) in material.iter_mut().enumerate() {
                if !*cell {
                    continue;
                }
                let x = grid.center_of(k);
                let c = [
                    (x[0] / pitch).round() * pitch,
                    if grid.dim == 2 {
                        (x[1] / pitch).round() * pitch
                    } else {
                        0.0
                    },
                ];
                if !shape.contains_closed(grid.dim, c) {
                    continue;
                }
                let mut r2 = 0.0;
                for a in 0..grid.dim {
                    r2 += (x[a] - c[a]) * (x[a] - c[a]);
                }
                if r2 < radius * radius {
                    *cell = false;
                }
            }
        }
        PerforationSpec::RandomBalls { .. } => {
            for (k, cell) in material.iter_mut().enumerate() {
                if !*cell {
                    continue;
                }
                let x = grid.center_of(k);
                for (c, r) in &centers {
                    let mut r2 = 0.0;
                    for a in 0..grid.dim {
                        r2 += (x[a] - c[a]) * (x[a] - c[a]);
                    }
                    if r2 < r * r {
                        *cell = false;
                        break;
                    }
                }
            }
        }
        PerforationSpec::None => {}
    }
    let chi_eps = MaskedField::indicator(grid, material)?;
    let hole_mask: Vec<bool> = chi_omega
        .mask
        .iter()
        .zip(&chi_eps.mask)
        .map(|(&o, &e)| o && !e)
        .collect();
    let a_eps = MaskedField::indicator(grid, hole_mask)?;

    let ball = ball_stencil(grid, delta)?;
    let cover = convolve(&ball, &chi_eps, 0.0)?;
    let mut worst = f64::INFINITY;
    let mut worst_k = 0;
    for k in 0..grid.len() {
        // The intersection measure is nonnegative; tiny negative values are
        // spectral round-off and must not trip a zero floor.
        let v = cover.values[k].max(0.0);
        if chi_omega.mask[k] && v < worst {
            worst = v;
            worst_k = k;
        }
    }
    if worst < coverage_floor {
        let x = grid.center_of(worst_k);
        return Err(Error::Validation(format!(
            "coverage bound violated: ball intersection measure {worst:.6e} < floor {coverage_floor:.6e} at ({:.4}, {:.4})",
            x[0], x[1]
        )));
    }
    Ok((chi_eps, a_eps))
}

/// How the effective density field is produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensityMode {
    /// Closed-form value: 1 for no holes, the periodic material fraction for
    /// lattice perforations.
    Analytic,
    /// Moving average of the material indicator over a square window, clamped
    /// to the domain. `window` is the physical side length; omitted, it
    /// defaults to one perforation period.
    CellAverage { window: Option<f64> },
}

/// Analytic material fraction of the periodic cell.
pub fn periodic_material_fraction(dim: usize, radius_ratio: f64) -> f64 {
    if dim == 1 {
        1.0 - radius_ratio
    } else {
        1.0 - std::f64::consts::PI * radius_ratio * radius_ratio / 4.0
    }
}

/// Builds the effective density field on the domain.
///
/// The result lives on the domain mask, is zero outside, and must stay within
/// `[floor, 1]` on the domain; a value below the floor is an error.
pub fn effective_density(
    grid: &Grid,
    chi_omega: &MaskedField,
    chi_eps: &MaskedField,
    spec: &PerforationSpec,
    mode: &DensityMode,
    floor: f64,
) -> Result<MaskedField> {
    chi_omega.check_same_grid(chi_eps)?;
    let mask = chi_omega.mask.clone();
    let mut density = match (mode, spec) {
        (DensityMode::Analytic, PerforationSpec::None) => MaskedField::constant(grid, mask, 1.0)?,
        (DensityMode::Analytic, PerforationSpec::PeriodicBalls { radius_ratio, .. }) => {
            MaskedField::constant(
                grid,
                mask,
                periodic_material_fraction(grid.dim, *radius_ratio),
            )?
        }
        (DensityMode::Analytic, PerforationSpec::RandomBalls { .. }) => {
            return Err(Error::Config(
                "analytic density is defined only for no-hole and periodic perforations"
                    .to_string(),
            ));
        }
        (DensityMode::CellAverage { window }, spec) => {
            let side = match (window, spec) {
                (Some(w), _) => *w,
                (None, PerforationSpec::PeriodicBalls { eps, .. }) => 2.0 * eps,
                (None, PerforationSpec::None) => grid.min_h(),
                (None, PerforationSpec::RandomBalls { .. }) => {
                    return Err(Error::Config(
                        "cell-average density for random perforations needs an explicit window"
                            .to_string(),
                    ));
                }
            };
            cell_average_density(grid, chi_omega, chi_eps, side)?
        }
    };
    density.apply_mask();
    for k in 0..grid.len() {
        if chi_omega.mask[k] {
            let v = density.values[k];
            if v < floor {
                let x = grid.center_of(k);
                return Err(Error::Validation(format!(
                    "effective density {v:.6e} below floor {floor:.6e} at ({:.4}, {:.4})",
                    x[0], x[1]
                )));
            }
            if v > 1.0 + 1e-12 {
                return Err(Error::Validation(format!("effective density {v} above 1")));
            }
        }
    }
    Ok(density)
}

/// Moving average of the material indicator over a centered window of the
/// given physical side, restricted to domain cells; summed-area tables keep
/// it O(grid size).
fn cell_average_density(
    grid: &Grid,
    chi_omega: &MaskedField,
    chi_eps: &MaskedField,
    side: f64,
) -> Result<MaskedField> {
    let k0 = ((side / grid.h[0]).round() as usize).max(1);
    let k1 = if grid.dim == 2 {
        ((side / grid.h[1]).round() as usize).max(1)
    } else {
        1
    };
    let (n0, n1) = (grid.n[0], grid.n[1]);
    // sat[i][j] holds the sum over cells [0, i) x [0, j).
    let mut sat_mat = vec![0.0f64; (n0 + 1) * (n1 + 1)];
    let mut sat_cnt = vec![0.0f64; (n0 + 1) * (n1 + 1)];
    let w = n1 + 1;
    for i0 in 0..n0 {
        for i1 in 0..n1 {
            let k = grid.idx(i0, i1);
            let m = chi_eps.values[k];
            let c = if chi_omega.mask[k] { 1.0 } else { 0.0 };
            sat_mat[(i0 + 1) * w + i1 + 1] =
                m + sat_mat[i0 * w + i1 + 1] + sat_mat[(i0 + 1) * w + i1] - sat_mat[i0 * w + i1];
            sat_cnt[(i0 + 1) * w + i1 + 1] =
                c + sat_cnt[i0 * w + i1 + 1] + sat_cnt[(i0 + 1) * w + i1] - sat_cnt[i0 * w + i1];
        }
    }
    let window_sum = |sat: &[f64], a0: usize, b0: usize, a1: usize, b1: usize| -> f64 {
        sat[b0 * w + b1] - sat[a0 * w + b1] - sat[b0 * w + a1] + sat[a0 * w + a1]
    };
    let mut out = MaskedField::zeros(grid, chi_omega.mask.clone())?;
    for i0 in 0..n0 {
        for i1 in 0..n1 {
            let k = grid.idx(i0, i1);
            if !chi_omega.mask[k] {
                continue;
            }
            let a0 = i0.saturating_sub(k0 / 2);
            let b0 = (i0 + k0.div_ceil(2)).min(n0);
            let a1 = if grid.dim == 2 {
                i1.saturating_sub(k1 / 2)
            } else {
                0
            };
            let b1 = if grid.dim == 2 {
                (i1 + k1.div_ceil(2)).min(n1)
            } else {
                n1
            };
            let cnt = window_sum(&sat_cnt, a0, b0, a1, b1);
            if cnt > 0.0 {
                out.values[k] = window_sum(&sat_mat, a0, b0, a1, b1) / cnt;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    fn unit_square_grid(n: usize) -> Grid {
        build_grid(2, n, &[[0.0, 1.0], [0.0, 1.0]]).unwrap()
    }

    fn centered_square() -> DomainShape {
        DomainShape::Square {
            center: [0.5, 0.5],
            half_width: 0.25,
        }
    }

    #[test]
    fn domain_mask_area_fraction() {
        let g = unit_square_grid(64);
        let chi = domain_mask(&g, &centered_square(), 0.2).unwrap();
        let frac = chi.mask_measure();
        assert!((frac - 0.25).abs() < 2.0 / 64.0);
    }

    #[test]
    fn domain_touching_boundary_rejected() {
        let g = unit_square_grid(32);
        let shape = DomainShape::Square {
            center: [0.5, 0.5],
            half_width: 0.5,
        };
        let err = domain_mask(&g, &shape, 0.1).unwrap_err();
        assert!(err.to_string().contains("margin"));
    }

    #[test]
    fn disk_area_close_to_analytic() {
        let g = unit_square_grid(128);
        let shape = DomainShape::Disk {
            center: [0.5, 0.5],
            radius: 0.25,
        };
        let chi = domain_mask(&g, &shape, 0.2).unwrap();
        let analytic = std::f64::consts::PI * 0.25 * 0.25;
        assert!((chi.mask_measure() - analytic).abs() < 4.0 * 0.25 / 128.0);
    }

    #[test]
    fn no_holes_returns_domain() {
        let g = unit_square_grid(32);
        let chi = domain_mask(&g, &centered_square(), 0.1).unwrap();
        let (chi_eps, holes) = perforate(
            &g,
            &chi,
            &centered_square(),
            &PerforationSpec::None,
            0.1,
            1e-3,
        )
        .unwrap();
        assert_eq!(chi_eps.values, chi.values);
        assert_eq!(holes.mask_count(), 0);
    }

    #[test]
    fn partition_is_exact() {
        let g = unit_square_grid(64);
        let chi = domain_mask(&g, &centered_square(), 0.1).unwrap();
        let spec = PerforationSpec::PeriodicBalls {
            eps: 1.0 / 8.0,
            radius_ratio: 0.5,
        };
        let (chi_eps, holes) = perforate(&g, &chi, &centered_square(), &spec, 0.1, 1e-3).unwrap();
        for k in 0..g.len() {
            assert_eq!(chi_eps.values[k] + holes.values[k], chi.values[k]);
            assert!(chi_eps.values[k] <= chi.values[k]);
        }
    }

    #[test]
    fn periodic_hole_fraction_near_analytic() {
        let g = unit_square_grid(256);
        let chi = domain_mask(&g, &centered_square(), 0.1).unwrap();
        let spec = PerforationSpec::PeriodicBalls {
            eps: 1.0 / 8.0,
            radius_ratio: 0.5,
        };
        let (_, holes) = perforate(&g, &chi, &centered_square(), &spec, 0.1, 1e-3).unwrap();
        let frac = holes.mask_measure() / chi.mask_measure();
        let analytic = std::f64::consts::PI / 16.0;
        assert!((frac - analytic).abs() < 0.02);
    }

    #[test]
    fn random_masks_reproducible() {
        let g = unit_square_grid(48);
        let chi = domain_mask(&g, &centered_square(), 0.1).unwrap();
        let spec = PerforationSpec::RandomBalls {
            count: 6,
            radius: 0.03,
            rng_seed: 11,
        };
        let (a, _) = perforate(&g, &chi, &centered_square(), &spec, 0.12, 1e-3).unwrap();
        let (b, _) = perforate(&g, &chi, &centered_square(), &spec, 0.12, 1e-3).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn analytic_density_values() {
        assert!(
            (periodic_material_fraction(2, 0.5) - (1.0 - std::f64::consts::PI / 16.0)).abs()
                < 1e-15
        );
        assert!((periodic_material_fraction(1, 0.25) - 0.75).abs() < 1e-15);
        let g = unit_square_grid(32);
        let chi = domain_mask(&g, &centered_square(), 0.1).unwrap();
        let dens = effective_density(
            &g,
            &chi,
            &chi,
            &PerforationSpec::None,
            &DensityMode::Analytic,
            1e-3,
        )
        .unwrap();
        for k in 0..g.len() {
            assert_eq!(dens.values[k], chi.values[k]);
        }
    }

    #[test]
    fn cell_average_tracks_analytic() {
        let g = unit_square_grid(256);
        let chi = domain_mask(&g, &centered_square(), 0.1).unwrap();
        let spec = PerforationSpec::PeriodicBalls {
            eps: 1.0 / 16.0,
            radius_ratio: 0.5,
        };
        let (chi_eps, _) = perforate(&g, &chi, &centered_square(), &spec, 0.1, 1e-3).unwrap();
        let dens = effective_density(
            &g,
            &chi,
            &chi_eps,
            &spec,
            &DensityMode::CellAverage { window: None },
            1e-3,
        )
        .unwrap();
        let analytic = periodic_material_fraction(2, 0.5);
        let mut worst = 0.0f64;
        for k in 0..g.len() {
            // deep interior cells only, away from the window clamp
            let x = g.center_of(k);
            if (x[0] - 0.5).abs() < 0.15 && (x[1] - 0.5).abs() < 0.15 {
                worst = worst.max((dens.values[k] - analytic).abs());
            }
        }
        assert!(worst < 0.05, "worst deviation {worst}");
    }
}
