//! Reaction terms built from ball averages of the state.
//!
//! The reaction is a pointwise function `g` applied to a local mean `m` of
//! the state over a ball of radius `delta`, weighted by the material present
//! there. Three flavors exist: averaging against the perforated material
//! indicator, averaging against the effective density, and the collapsed
//! local form `g(u / density)` that the vanishing-radius limit produces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::MaskedField;
use crate::grid::Grid;
use crate::kernel::{convolve, KernelStencil};

/// Pointwise reaction function, globally Lipschitz by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum GSpec {
    /// `g(s) = a s + b`.
    Linear { a: f64, b: f64 },
    /// `g(s) = tanh(a s)`.
    TanhScale { a: f64 },
    /// `g(s) = s (1 - s)` on `[-m, m]`, continued linearly with matching
    /// slope outside; the raw parabola is not globally Lipschitz.
    ClampedLogistic { m: f64 },
}

impl GSpec {
    pub fn eval(&self, s: f64) -> f64 {
        match *self {
            GSpec::Linear { a, b } => a * s + b,
            GSpec::TanhScale { a } => (a * s).tanh(),
            GSpec::ClampedLogistic { m } => {
                if s > m {
                    m * (1.0 - m) + (1.0 - 2.0 * m) * (s - m)
                } else if s < -m {
                    -m * (1.0 + m) + (1.0 + 2.0 * m) * (s + m)
                } else {
                    s * (1.0 - s)
                }
            }
        }
    }

    /// Global Lipschitz bound of the realized function.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            GSpec::Linear { a, .. } => a.abs(),
            GSpec::TanhScale { a } => a.abs(),
            GSpec::ClampedLogistic { m } => 1.0 + 2.0 * m.abs(),
        }
    }

    /// Value at zero.
    pub fn g0(&self) -> f64 {
        match *self {
            GSpec::Linear { b, .. } => b,
            GSpec::TanhScale { .. } => 0.0,
            GSpec::ClampedLogistic { .. } => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            GSpec::ClampedLogistic { m } if m <= 0.0 => Err(Error::Config(
                "clamped_logistic needs a positive clamp bound".to_string(),
            )),
            _ => Ok(()),
        }
    }
}

/// How the reaction argument is averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AveragingMode {
    /// Mean over the ball intersected with the perforated material.
    Perforated,
    /// Mean weighted by the effective density.
    Density,
    /// Collapsed local form `g(u / density)`.
    Local,
}

/// Ball radius, averaging flavor, and the lower bound the discrete ball
/// denominator must respect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AveragingSpec {
    pub delta: f64,
    pub mode: AveragingMode,
    #[serde(default = "default_floor")]
    pub denominator_floor: f64,
}

fn default_floor() -> f64 {
    1e-3
}

/// Indicator stencil of the ball of radius `delta`: weight 1 at every grid
/// offset whose center lies strictly inside the ball. Unnormalized, so its
/// discrete mass is the ball measure.
pub fn ball_stencil(grid: &Grid, delta: f64) -> Result<KernelStencil> {
    let max_h = if grid.dim == 1 {
        grid.h[0]
    } else {
        grid.h[0].max(grid.h[1])
    };
    if delta < 2.0 * max_h {
        return Err(Error::Config(format!(
            "averaging radius {delta} is below two cells (h = {max_h})"
        )));
    }
    let e0 = (delta / grid.h[0]).ceil() as i64;
    let e1 = if grid.dim == 2 {
        (delta / grid.h[1]).ceil() as i64
    } else {
        0
    };
    let mut offsets = Vec::new();
    let mut weights = Vec::new();
    for o0 in -e0..=e0 {
        for o1 in -e1..=e1 {
            let dx = o0 as f64 * grid.h[0];
            let dy = o1 as f64 * grid.h[1];
            if dx * dx + dy * dy < delta * delta {
                offsets.push([o0, o1]);
                weights.push(1.0);
            }
        }
    }
    KernelStencil::from_samples(grid, delta, offsets, weights, false)
}

/// Ball mean `m(x) = (1_B * u)(x) / (1_B * weight)(x)` on the region mask.
///
/// `weight` is the field the denominator integrates (material indicator or
/// effective density). The denominator is checked against the configured
/// floor at every region point; the result is zero off the region.
pub fn average_m(
    u: &MaskedField,
    weight: &MaskedField,
    spec: &AveragingSpec,
    region: &[bool],
) -> Result<MaskedField> {
    u.check_same_grid(weight)?;
    let g = &u.grid;
    if region.len() != g.len() {
        return Err(Error::GridMismatch(
            "region mask length mismatch".to_string(),
        ));
    }
    let ball = ball_stencil(g, spec.delta)?;
    let num = convolve(&ball, u, 0.0)?;
    let den = convolve(&ball, weight, 0.0)?;
    let mut out = MaskedField::zeros(g, region.to_vec())?;
    for (k, &inside) in region.iter().enumerate() {
        if !inside {
            continue;
        }
        if den.values[k] < spec.denominator_floor {
            let x = g.center_of(k);
            return Err(Error::Validation(format!(
                "ball-average denominator {:.6e} below floor {:.6e} at ({:.4}, {:.4})",
                den.values[k], spec.denominator_floor, x[0], x[1]
            )));
        }
        out.values[k] = num.values[k] / den.values[k];
    }
    Ok(out)
}

/// Composed reaction `F(u) = g(m(u))` in the configured averaging flavor,
/// evaluated on the support of `u` and zero elsewhere.
///
/// Perforated mode takes the averaging weight from `u`'s own mask (the state
/// is pre-masked to the material region by contract). Local mode divides by
/// the density pointwise and needs it positive on the support.
pub fn reaction_f(
    u: &MaskedField,
    spec: &AveragingSpec,
    g: &GSpec,
    density: &MaskedField,
) -> Result<MaskedField> {
    u.check_same_grid(density)?;
    let grid = &u.grid;
    match spec.mode {
        AveragingMode::Perforated => {
            let weight = MaskedField::indicator(grid, u.mask.clone())?;
            let m = average_m(u, &weight, spec, &u.mask)?;
            let values = m.values.iter().map(|&s| g.eval(s)).collect();
            let mut out = MaskedField::from_values(grid, values, u.mask.clone())?;
            out.apply_mask();
            Ok(out)
        }
        AveragingMode::Density => {
            let m = average_m(u, density, spec, &u.mask)?;
            let values = m.values.iter().map(|&s| g.eval(s)).collect();
            let mut out = MaskedField::from_values(grid, values, u.mask.clone())?;
            out.apply_mask();
            Ok(out)
        }
        AveragingMode::Local => {
            let mut out = MaskedField::zeros(grid, u.mask.clone())?;
            for k in 0..grid.len() {
                if u.mask[k] {
                    let d = density.values[k];
                    if d <= 0.0 {
                        return Err(Error::Validation(
                            "local reaction needs a positive density on the support".to_string(),
                        ));
                    }
                    out.values[k] = g.eval(u.values[k] / d);
                }
            }
            Ok(out)
        }
    }
}

/// Closed-form fields for the boundary-derivative validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "field", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnalyticField {
    Constant {
        value: f64,
    },
    /// `u(x) = slope * x_axis`.
    Linear {
        axis: usize,
        slope: f64,
    },
    GaussianBump {
        center: [f64; 2],
        sigma: f64,
        amplitude: f64,
    },
    /// `u(x) = sin(pi f x_1) sin(pi f x_2)`.
    SineProduct {
        freq: f64,
    },
}

impl AnalyticField {
    pub fn eval(&self, dim: usize, x: [f64; 2]) -> f64 {
        match *self {
            AnalyticField::Constant { value } => value,
            AnalyticField::Linear { axis, slope } => slope * x[axis],
            AnalyticField::GaussianBump {
                center,
                sigma,
                amplitude,
            } => {
                let mut r2 = 0.0;
                for a in 0..dim {
                    r2 += (x[a] - center[a]) * (x[a] - center[a]);
                }
                amplitude * (-0.5 * r2 / (sigma * sigma)).exp()
            }
            AnalyticField::SineProduct { freq } => {
                let mut v = (std::f64::consts::PI * freq * x[0]).sin();
                if dim == 2 {
                    v *= (std::f64::consts::PI * freq * x[1]).sin();
                }
                v
            }
        }
    }
}

/// Ball integral `Phi(p) = int_{B_r(p)} u` by polar quadrature (Simpson in
/// radius, equal-angle trapezoid in angle); plain Simpson on the interval in
/// 1D.
fn ball_integral(
    field: &AnalyticField,
    dim: usize,
    p: [f64; 2],
    r: f64,
    n_angle: usize,
    n_radial: usize,
) -> f64 {
    let simpson = |f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize| -> f64 {
        // n intervals, n even
        let n = if n.is_multiple_of(2) { n } else { n + 1 };
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    };
    if dim == 1 {
        simpson(&|t| field.eval(1, [p[0] + t, 0.0]), -r, r, n_radial)
    } else {
        let ring = |rho: f64| -> f64 {
            let mut s = 0.0;
            for i in 0..n_angle {
                let th = 2.0 * std::f64::consts::PI * i as f64 / n_angle as f64;
                s += field.eval(2, [p[0] + rho * th.cos(), p[1] + rho * th.sin()]);
            }
            s * 2.0 * std::f64::consts::PI / n_angle as f64 * rho
        };
        simpson(&ring, 0.0, r, n_radial)
    }
}

/// Checks the derivative identity for ball integrals of a smooth field: the
/// directional derivative of `Phi(p) = int_{B_r(p)} u` along the first axis
/// equals the boundary integral of `u (v . N)` over the sphere.
///
/// Returns (finite-difference side, boundary-quadrature side, relative
/// error). `n_boundary` counts the equal-angle boundary samples.
pub fn appendix_gradient_check(
    grid: &Grid,
    field: &AnalyticField,
    x: [f64; 2],
    r: f64,
    n_boundary: usize,
) -> Result<(f64, f64, f64)> {
    if r < 2.0 * grid.min_h() {
        return Err(Error::Config(format!(
            "ball radius {r} too small for the grid (h = {})",
            grid.min_h()
        )));
    }
    if n_boundary < 16 {
        return Err(Error::Config(
            "need at least 16 boundary samples".to_string(),
        ));
    }
    let n_radial = (n_boundary / 4).max(64);
    let t = 1e-3 * r;
    let dim = grid.dim;
    let phi_plus = ball_integral(field, dim, [x[0] + t, x[1]], r, n_boundary, n_radial);
    let phi_minus = ball_integral(field, dim, [x[0] - t, x[1]], r, n_boundary, n_radial);
    let lhs = (phi_plus - phi_minus) / (2.0 * t);
    let rhs = if dim == 1 {
        field.eval(1, [x[0] + r, 0.0]) - field.eval(1, [x[0] - r, 0.0])
    } else {
        let mut s = 0.0;
        for i in 0..n_boundary {
            let th = 2.0 * std::f64::consts::PI * i as f64 / n_boundary as f64;
            // outward normal is (cos th, sin th); probe direction is e1
            s += field.eval(2, [x[0] + r * th.cos(), x[1] + r * th.sin()]) * th.cos();
        }
        s * 2.0 * std::f64::consts::PI * r / n_boundary as f64
    };
    let scale = rhs.abs().max(lhs.abs()).max(1e-12);
    Ok((lhs, rhs, (lhs - rhs).abs() / scale))
}
