//! Discrete convolution kernels and the operators built from them.
//!
//! A kernel is sampled on grid offsets inside a compact support radius,
//! symmetrized, and rescaled to unit discrete mass, so the constant-field
//! identity `J * 1 = 1` holds exactly at the discrete level. Convolution is
//! evaluated by zero-padded FFT with an analytic correction for a constant
//! exterior value, with a double-sum path kept as the oracle.

use std::sync::{Arc, OnceLock};

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::MaskedField;
use crate::grid::Grid;

/// Built-in kernel profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Bump,
    Tent,
    TruncatedGaussian,
}

/// Sampled, symmetrized, discretely normalized convolution kernel.
///
/// `offsets[i]` is an integer grid offset and `weights[i]` the kernel value
/// there; only offsets with nonzero sampled weight are stored. The FFT plan
/// and kernel spectrum are built lazily on first convolution and shared.
pub struct KernelStencil {
    pub grid: Grid,
    pub support_radius: f64,
    pub offsets: Vec<[i64; 2]>,
    pub weights: Vec<f64>,
    /// Kernel value at offset zero.
    pub j0: f64,
    prepared: OnceLock<Arc<PreparedConv>>,
}

impl Clone for KernelStencil {
    fn clone(&self) -> Self {
        KernelStencil {
            grid: self.grid.clone(),
            support_radius: self.support_radius,
            offsets: self.offsets.clone(),
            weights: self.weights.clone(),
            j0: self.j0,
            prepared: OnceLock::new(),
        }
    }
}

impl std::fmt::Debug for KernelStencil {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KernelStencil")
            .field("support_radius", &self.support_radius)
            .field("offsets", &self.offsets.len())
            .field("j0", &self.j0)
            .finish()
    }
}

/// Compensated summation; keeps the discrete-mass error near machine epsilon
/// even for stencils with thousands of offsets.
pub(crate) fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut carry = 0.0;
    for v in values {
        let y = v - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    sum
}

fn next_pow2(n: usize) -> usize {
    n.next_power_of_two()
}

impl KernelStencil {
    /// Builds a stencil from explicit offsets and weights.
    ///
    /// With `normalize` the weights are rescaled to unit discrete mass
    /// (`sum w * cell_volume = 1`); without it they are kept as given, which
    /// is what indicator-style stencils need. The zero offset must be present.
    pub fn from_samples(
        grid: &Grid,
        support_radius: f64,
        offsets: Vec<[i64; 2]>,
        mut weights: Vec<f64>,
        normalize: bool,
    ) -> Result<Self> {
        if offsets.len() != weights.len() || offsets.is_empty() {
            return Err(Error::Config(
                "kernel offsets and weights must be nonempty and of equal length".to_string(),
            ));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config(
                "kernel weights must be finite and >= 0".to_string(),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for o in &offsets {
            if grid.dim == 1 && o[1] != 0 {
                return Err(Error::Config(
                    "1D kernel offset with nonzero second axis".to_string(),
                ));
            }
            if !seen.insert(*o) {
                return Err(Error::Config(format!("duplicate kernel offset {o:?}")));
            }
        }
        let zero_pos = offsets
            .iter()
            .position(|o| *o == [0, 0])
            .ok_or_else(|| Error::Config("kernel must include the zero offset".to_string()))?;
        if normalize {
            let mass = kahan_sum(weights.iter().copied()) * grid.cell_volume;
            if mass <= 0.0 {
                return Err(Error::Config(
                    "kernel has zero discrete mass; support too small for this grid".to_string(),
                ));
            }
            for w in &mut weights {
                *w /= mass;
            }
        }
        let j0 = weights[zero_pos];
        Ok(KernelStencil {
            grid: grid.clone(),
            support_radius,
            offsets,
            weights,
            j0,
            prepared: OnceLock::new(),
        })
    }

    /// Discrete mass `sum w * cell_volume`.
    pub fn mass(&self) -> f64 {
        kahan_sum(self.weights.iter().copied()) * self.grid.cell_volume
    }

    /// Largest absolute offset per axis.
    pub fn extent(&self) -> [usize; 2] {
        let mut e = [0usize; 2];
        for o in &self.offsets {
            e[0] = e[0].max(o[0].unsigned_abs() as usize);
            e[1] = e[1].max(o[1].unsigned_abs() as usize);
        }
        e
    }

    /// Weight at a given offset, zero if absent.
    pub fn weight_at(&self, offset: [i64; 2]) -> f64 {
        self.offsets
            .iter()
            .position(|o| *o == offset)
            .map_or(0.0, |i| self.weights[i])
    }

    pub(crate) fn prepared(&self) -> &Arc<PreparedConv> {
        self.prepared
            .get_or_init(|| Arc::new(PreparedConv::build(self)))
    }
}

/// Samples a kernel family on the grid, symmetrizes, and normalizes to unit
/// discrete mass.
///
/// Offsets are kept when the sample point lies strictly inside the support
/// radius. The profile is evaluated at `|offset * h|` and averaged with the
/// negated offset, which makes the weight table symmetric bitwise.
pub fn build_kernel(
    grid: &Grid,
    family: KernelFamily,
    support_radius: f64,
) -> Result<KernelStencil> {
    let max_h = if grid.dim == 1 {
        grid.h[0]
    } else {
        grid.h[0].max(grid.h[1])
    };
    if support_radius < 2.0 * max_h {
        return Err(Error::Config(format!(
            "kernel support radius {support_radius} is below two cells (h = {max_h})"
        )));
    }
    for axis in 0..grid.dim {
        let extent = grid.high[axis] - grid.low[axis];
        if support_radius >= 0.5 * extent {
            return Err(Error::Config(format!(
                "kernel support radius {support_radius} does not fit axis {axis} extent {extent}"
            )));
        }
    }
    let profile = |r: f64| -> f64 {
        let s = r / support_radius;
        match family {
            KernelFamily::Tent => 1.0 - s,
            KernelFamily::Bump => (-1.0 / (1.0 - s * s)).exp(),
            KernelFamily::TruncatedGaussian => {
                let sigma = support_radius / 3.0;
                (-0.5 * r * r / (sigma * sigma)).exp()
            }
        }
    };
    let e0 = (support_radius / grid.h[0]).ceil() as i64;
    let e1 = if grid.dim == 2 {
        (support_radius / grid.h[1]).ceil() as i64
    } else {
        0
    };
    let raw = |o0: i64, o1: i64| -> f64 {
        let dx = o0 as f64 * grid.h[0];
        let dy = o1 as f64 * grid.h[1];
        let r = (dx * dx + dy * dy).sqrt();
        if r < support_radius {
            profile(r)
        } else {
            0.0
        }
    };
    let mut offsets = Vec::new();
    let mut weights = Vec::new();
    for o0 in -e0..=e0 {
        for o1 in -e1..=e1 {
            let w = 0.5 * (raw(o0, o1) + raw(-o0, -o1));
            if w > 0.0 {
                offsets.push([o0, o1]);
                weights.push(w);
            }
        }
    }
    if offsets.is_empty() || raw(0, 0) <= 0.0 {
        return Err(Error::Config(
            "kernel sampling produced no positive weights".to_string(),
        ));
    }
    KernelStencil::from_samples(grid, support_radius, offsets, weights, true)
}

/// Precomputed FFT data for one stencil: padded kernel spectrum, plans, and
/// the convolution of the all-ones box field used for the constant-exterior
/// correction.
pub(crate) struct PreparedConv {
    p: [usize; 2],
    fwd: [Arc<dyn Fft<f64>>; 2],
    inv: [Arc<dyn Fft<f64>>; 2],
    spectrum: Vec<Complex<f64>>,
    /// `(J * box_indicator)` with exterior 0, on the grid.
    pub ones_conv: Vec<f64>,
    pub mass: f64,
}

impl PreparedConv {
    fn build(j: &KernelStencil) -> Self {
        let g = &j.grid;
        let ext = j.extent();
        let p0 = next_pow2(g.n[0] + 2 * ext[0]);
        let p1 = next_pow2(g.n[1] + 2 * ext[1]);
        let mut planner = FftPlanner::new();
        let fwd = [planner.plan_fft_forward(p0), planner.plan_fft_forward(p1)];
        let inv = [planner.plan_fft_inverse(p0), planner.plan_fft_inverse(p1)];

        let mut kpad = vec![Complex::new(0.0, 0.0); p0 * p1];
        for (o, &w) in j.offsets.iter().zip(&j.weights) {
            let r0 = o[0].rem_euclid(p0 as i64) as usize;
            let r1 = o[1].rem_euclid(p1 as i64) as usize;
            kpad[r0 * p1 + r1] = Complex::new(w, 0.0);
        }
        let mut prep = PreparedConv {
            p: [p0, p1],
            fwd,
            inv,
            spectrum: Vec::new(),
            ones_conv: Vec::new(),
            mass: j.mass(),
        };
        prep.fft2(&mut kpad, true);
        prep.spectrum = kpad;

        let ones = vec![1.0; g.len()];
        prep.ones_conv = prep.convolve_zero_ext(g, &ones);
        prep
    }

    /// In-place 2D FFT over a `p0 x p1` row-major buffer.
    fn fft2(&self, buf: &mut [Complex<f64>], forward: bool) {
        let [p0, p1] = self.p;
        let plans = if forward { &self.fwd } else { &self.inv };
        let mut scratch = vec![
            Complex::new(0.0, 0.0);
            plans[0]
                .get_inplace_scratch_len()
                .max(plans[1].get_inplace_scratch_len())
        ];
        if p1 > 1 {
            for row in buf.chunks_exact_mut(p1) {
                plans[1].process_with_scratch(row, &mut scratch);
            }
        }
        if p0 > 1 {
            let mut col = vec![Complex::new(0.0, 0.0); p0];
            for c in 0..p1 {
                for r in 0..p0 {
                    col[r] = buf[r * p1 + c];
                }
                plans[0].process_with_scratch(&mut col, &mut scratch);
                for r in 0..p0 {
                    buf[r * p1 + c] = col[r];
                }
            }
        }
    }

    /// Linear convolution of `values` (extended by zero) restricted to the grid.
    fn convolve_zero_ext(&self, g: &Grid, values: &[f64]) -> Vec<f64> {
        let [p0, p1] = self.p;
        let mut fpad = vec![Complex::new(0.0, 0.0); p0 * p1];
        for i0 in 0..g.n[0] {
            for i1 in 0..g.n[1] {
                fpad[i0 * p1 + i1] = Complex::new(values[g.idx(i0, i1)], 0.0);
            }
        }
        self.fft2(&mut fpad, true);
        for (a, b) in fpad.iter_mut().zip(&self.spectrum) {
            *a *= *b;
        }
        self.fft2(&mut fpad, false);
        let scale = g.cell_volume / (p0 * p1) as f64;
        let mut out = vec![0.0; g.len()];
        for i0 in 0..g.n[0] {
            for i1 in 0..g.n[1] {
                out[g.idx(i0, i1)] = fpad[i0 * p1 + i1].re * scale;
            }
        }
        out
    }
}

/// Convolution `(J * f)(x) = sum_y J(x-y) fhat(y) cell_volume`, where `fhat`
/// equals `f` on the box and the constant `exterior` outside.
///
/// The box part goes through the zero-padded FFT; the exterior contributes
/// `exterior * (mass - (J * box_indicator)(x))`, which is exact because the
/// stencil support is finite. The result is defined at every grid point.
pub fn convolve(j: &KernelStencil, f: &MaskedField, exterior: f64) -> Result<MaskedField> {
    if j.grid != f.grid {
        return Err(Error::GridMismatch(
            "kernel and field live on different grids".to_string(),
        ));
    }
    let prep = j.prepared();
    let mut out = prep.convolve_zero_ext(&f.grid, &f.values);
    if exterior != 0.0 {
        for (v, oc) in out.iter_mut().zip(&prep.ones_conv) {
            *v += exterior * (prep.mass - oc);
        }
    }
    MaskedField::from_values(&f.grid, out, vec![true; f.grid.len()])
}

/// Double-sum oracle for [`convolve`]; same contract, O(n * support) cost.
pub fn convolve_direct(j: &KernelStencil, f: &MaskedField, exterior: f64) -> Result<MaskedField> {
    if j.grid != f.grid {
        return Err(Error::GridMismatch(
            "kernel and field live on different grids".to_string(),
        ));
    }
    let g = &f.grid;
    let mut out = vec![0.0; g.len()];
    for i0 in 0..g.n[0] {
        for i1 in 0..g.n[1] {
            let mut acc = 0.0;
            for (o, &w) in j.offsets.iter().zip(&j.weights) {
                let y0 = i0 as i64 - o[0];
                let y1 = i1 as i64 - o[1];
                let fy = if y0 >= 0 && (y0 as usize) < g.n[0] && y1 >= 0 && (y1 as usize) < g.n[1] {
                    f.values[g.idx(y0 as usize, y1 as usize)]
                } else {
                    exterior
                };
                acc += w * fy;
            }
            out[g.idx(i0, i1)] = acc * g.cell_volume;
        }
    }
    MaskedField::from_values(g, out, vec![true; g.len()])
}

/// Boundary-condition flavor of the perforated-domain problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BcFlavor {
    Dirichlet,
    Neumann,
}

/// Decay coefficient of the perforated-domain equation.
///
/// Dirichlet keeps the full absorption `h == 1`. Neumann removes the holes
/// from the integration region: `h = 1 - (J * hole_indicator)` with exterior
/// zero, using the unit kernel mass.
pub fn coefficient_h_eps(
    j: &KernelStencil,
    chi_omega: &MaskedField,
    chi_eps: &MaskedField,
    bc: BcFlavor,
) -> Result<MaskedField> {
    chi_omega.check_same_grid(chi_eps)?;
    let g = &chi_omega.grid;
    if j.grid != *g {
        return Err(Error::GridMismatch(
            "kernel grid differs from mask grid".to_string(),
        ));
    }
    match bc {
        BcFlavor::Dirichlet => MaskedField::constant(g, vec![true; g.len()], 1.0),
        BcFlavor::Neumann => {
            let mut holes = MaskedField::zeros_full(g);
            for k in 0..g.len() {
                holes.values[k] = chi_omega.values[k] - chi_eps.values[k];
            }
            let conv = convolve(j, &holes, 0.0)?;
            let values = conv.values.iter().map(|v| 1.0 - v).collect();
            MaskedField::from_values(g, values, vec![true; g.len()])
        }
    }
}

/// Decay coefficient of the homogenized equation:
/// `h0 = 1 - (J * (chi_omega - density))` with exterior zero.
pub fn coefficient_h0(
    j: &KernelStencil,
    chi_omega: &MaskedField,
    density: &MaskedField,
) -> Result<MaskedField> {
    chi_omega.check_same_grid(density)?;
    let g = &chi_omega.grid;
    if j.grid != *g {
        return Err(Error::GridMismatch(
            "kernel grid differs from mask grid".to_string(),
        ));
    }
    let mut diff = MaskedField::zeros_full(g);
    for k in 0..g.len() {
        diff.values[k] = chi_omega.values[k] - density.values[k];
    }
    let conv = convolve(j, &diff, 0.0)?;
    let values = conv.values.iter().map(|v| 1.0 - v).collect();
    MaskedField::from_values(g, values, vec![true; g.len()])
}

/// Zero-order coefficient of the homogenized Neumann equation,
/// pointwise `h0 - density`.
pub fn coefficient_lambda(h0: &MaskedField, density: &MaskedField) -> Result<MaskedField> {
    h0.check_same_grid(density)?;
    let g = &h0.grid;
    let values = h0
        .values
        .iter()
        .zip(&density.values)
        .map(|(a, b)| a - b)
        .collect();
    MaskedField::from_values(g, values, vec![true; g.len()])
}

/// Max-norm table of `|J * chi_i - J * density|` over the compact interior
/// window (points of the domain whose kernel support stays inside it).
///
/// For a family of perforation indicators converging weakly to the density,
/// the table decreases: convolution turns weak convergence into uniform
/// convergence on compact interior sets.
pub fn smoothing_check(
    j: &KernelStencil,
    chis: &[MaskedField],
    density: &MaskedField,
) -> Result<Vec<f64>> {
    let g = &density.grid;
    if j.grid != *g {
        return Err(Error::GridMismatch(
            "kernel grid differs from field grid".to_string(),
        ));
    }
    let chi_omega = MaskedField::indicator(g, density.mask.clone())?;
    let omega_conv = convolve(j, &chi_omega, 0.0)?;
    let window: Vec<bool> = (0..g.len())
        .map(|k| density.mask[k] && (omega_conv.values[k] - j.mass()).abs() < 1e-9)
        .collect();
    if !window.iter().any(|&w| w) {
        return Err(Error::Validation(
            "interior window is empty; domain too small for this kernel support".to_string(),
        ));
    }
    let base = convolve(j, density, 0.0)?;
    let mut table = Vec::with_capacity(chis.len());
    for chi in chis {
        chi.check_same_grid(density)?;
        let conv = convolve(j, chi, 0.0)?;
        let mut worst = 0.0f64;
        for (k, &inside) in window.iter().enumerate() {
            if inside {
                worst = worst.max((conv.values[k] - base.values[k]).abs());
            }
        }
        table.push(worst);
    }
    Ok(table)
}
