//! Time integration of the nonlocal evolution problems.
//!
//! Every equation flavor shares one right-hand side shape
//! `a (J * u) - h u + a F(u)` on its support set; the flavors differ only in
//! the coefficient fields and the averaging mode of the reaction. The
//! exponential scheme treats the decay term exactly and freezes the source
//! over the step, which is the one-step form of the variation-of-constants
//! representation of the solution; Runge-Kutta and Euler steps are kept for
//! accuracy studies and cross-checks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::MaskedField;
use crate::grid::Grid;
use crate::kernel::{coefficient_h0, coefficient_h_eps, convolve, BcFlavor, KernelStencil};
use crate::nonlinearity::{ball_stencil, AveragingMode, AveragingSpec, GSpec};
use crate::spectral;

/// Equation selector: the perforated-domain problem in both flavors, the two
/// homogenized limits, and the local-reaction limit in both flavors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquationKind {
    EpsDirichlet,
    EpsNeumann,
    LimitDirichlet,
    LimitNeumann,
    DeltaZeroDirichlet,
    DeltaZeroNeumann,
}

impl EquationKind {
    /// True for the perforated-domain problem (state lives on the material).
    pub fn is_eps(&self) -> bool {
        matches!(self, EquationKind::EpsDirichlet | EquationKind::EpsNeumann)
    }

    pub fn bc(&self) -> BcFlavor {
        match self {
            EquationKind::EpsDirichlet
            | EquationKind::LimitDirichlet
            | EquationKind::DeltaZeroDirichlet => BcFlavor::Dirichlet,
            EquationKind::EpsNeumann
            | EquationKind::LimitNeumann
            | EquationKind::DeltaZeroNeumann => BcFlavor::Neumann,
        }
    }

    /// Averaging mode the equation's reaction term is defined with.
    pub fn required_mode(&self) -> AveragingMode {
        match self {
            EquationKind::EpsDirichlet | EquationKind::EpsNeumann => AveragingMode::Perforated,
            EquationKind::LimitDirichlet | EquationKind::LimitNeumann => AveragingMode::Density,
            EquationKind::DeltaZeroDirichlet | EquationKind::DeltaZeroNeumann => {
                AveragingMode::Local
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EquationKind::EpsDirichlet => "eps_dirichlet",
            EquationKind::EpsNeumann => "eps_neumann",
            EquationKind::LimitDirichlet => "limit_dirichlet",
            EquationKind::LimitNeumann => "limit_neumann",
            EquationKind::DeltaZeroDirichlet => "delta_zero_dirichlet",
            EquationKind::DeltaZeroNeumann => "delta_zero_neumann",
        }
    }
}

/// Time stepping scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Etd1,
    Rk4,
    Euler,
}

/// Named initial-data presets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialPreset {
    GaussianBump {
        center: [f64; 2],
        sigma: f64,
        amplitude: f64,
    },
    Constant {
        value: f64,
    },
    SineProduct {
        freq: f64,
    },
}

impl InitialPreset {
    pub fn eval(&self, dim: usize, x: [f64; 2]) -> f64 {
        match *self {
            InitialPreset::GaussianBump {
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
            InitialPreset::Constant { value } => value,
            InitialPreset::SineProduct { freq } => {
                let mut v = (std::f64::consts::PI * freq * x[0]).sin();
                if dim == 2 {
                    v *= (std::f64::consts::PI * freq * x[1]).sin();
                }
                v
            }
        }
    }
}

/// Complete description of one evolution problem.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub grid: Grid,
    pub chi_omega: MaskedField,
    pub chi_eps: MaskedField,
    pub density: MaskedField,
    pub kernel: KernelStencil,
    pub equation: EquationKind,
    pub g: GSpec,
    pub averaging: AveragingSpec,
    pub u0: InitialPreset,
    pub t_final: f64,
    pub dt: f64,
    pub scheme: Scheme,
    pub sample_stride: usize,
}

/// Sampled solution of one integration run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<MaskedField>,
    /// L2 norm of the state after every step, starting with the initial one.
    pub norm_log: Vec<f64>,
    /// Effective uniform step used (final time divided by the step count).
    pub dt: f64,
}

enum ReactionOp {
    /// `F = g((ball * u) / den)`; the denominator is state-independent and
    /// precomputed.
    Averaged { ball: KernelStencil, den: Vec<f64> },
    /// `F = g(u / density)`.
    Local { inv_density: Vec<f64> },
}

/// One evolution problem with its coefficient fields resolved and frozen.
pub struct Evolver {
    spec: ProblemSpec,
    support: Vec<bool>,
    a: Vec<f64>,
    h: Vec<f64>,
    h_max: f64,
    reaction: ReactionOp,
}

/// `phi1(z) = (1 - e^{-z}) / z`, the first exponential-integrator weight,
/// with a series branch near zero to avoid 0/0.
pub(crate) fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-6 {
        1.0 - z / 2.0 + z * z / 6.0
    } else {
        -(-z).exp_m1() / z
    }
}

impl Evolver {
    pub fn new(spec: ProblemSpec) -> Result<Self> {
        spec.g.validate()?;
        if spec.dt <= 0.0 || spec.t_final <= 0.0 {
            return Err(Error::Config(
                "time step and final time must be positive".to_string(),
            ));
        }
        if spec.sample_stride == 0 {
            return Err(Error::Config(
                "sample stride must be at least 1".to_string(),
            ));
        }
        spec.chi_omega.check_same_grid(&spec.chi_eps)?;
        spec.chi_omega.check_same_grid(&spec.density)?;
        if spec.kernel.grid != spec.grid || spec.chi_omega.grid != spec.grid {
            return Err(Error::GridMismatch(
                "problem components live on different grids".to_string(),
            ));
        }
        for k in 0..spec.grid.len() {
            if spec.chi_eps.mask[k] && !spec.chi_omega.mask[k] {
                return Err(Error::Validation(
                    "material mask extends outside the domain mask".to_string(),
                ));
            }
        }
        let required = spec.equation.required_mode();
        if spec.averaging.mode != required {
            return Err(Error::Config(format!(
                "equation {} needs averaging mode {:?}",
                spec.equation.name(),
                required
            )));
        }

        let support: Vec<bool> = if spec.equation.is_eps() {
            spec.chi_eps.mask.clone()
        } else {
            spec.chi_omega.mask.clone()
        };
        if !support.iter().any(|&m| m) {
            return Err(Error::Config("empty support set".to_string()));
        }

        let n = spec.grid.len();
        let mut a = vec![0.0; n];
        for k in 0..n {
            if support[k] {
                a[k] = if spec.equation.is_eps() {
                    1.0
                } else {
                    spec.density.values[k]
                };
            }
        }

        let h = match spec.equation {
            EquationKind::EpsDirichlet
            | EquationKind::LimitDirichlet
            | EquationKind::DeltaZeroDirichlet => vec![1.0; n],
            EquationKind::EpsNeumann => {
                coefficient_h_eps(
                    &spec.kernel,
                    &spec.chi_omega,
                    &spec.chi_eps,
                    BcFlavor::Neumann,
                )?
                .values
            }
            EquationKind::LimitNeumann | EquationKind::DeltaZeroNeumann => {
                coefficient_h0(&spec.kernel, &spec.chi_omega, &spec.density)?.values
            }
        };
        let h_max = support
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(k, _)| h[k])
            .fold(0.0f64, f64::max);

        let reaction = match spec.averaging.mode {
            AveragingMode::Perforated => {
                let ball = ball_stencil(&spec.grid, spec.averaging.delta)?;
                let den = convolve(&ball, &spec.chi_eps, 0.0)?.values;
                check_denominator(&spec.grid, &den, &support, spec.averaging.denominator_floor)?;
                ReactionOp::Averaged { ball, den }
            }
            AveragingMode::Density => {
                let ball = ball_stencil(&spec.grid, spec.averaging.delta)?;
                let den = convolve(&ball, &spec.density, 0.0)?.values;
                check_denominator(&spec.grid, &den, &support, spec.averaging.denominator_floor)?;
                ReactionOp::Averaged { ball, den }
            }
            AveragingMode::Local => {
                let mut inv = vec![0.0; n];
                for k in 0..n {
                    if support[k] {
                        if spec.density.values[k] <= 0.0 {
                            return Err(Error::Validation(
                                "local reaction needs a positive density on the support"
                                    .to_string(),
                            ));
                        }
                        inv[k] = 1.0 / spec.density.values[k];
                    }
                }
                ReactionOp::Local { inv_density: inv }
            }
        };

        Ok(Evolver {
            spec,
            support,
            a,
            h,
            h_max,
            reaction,
        })
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn support(&self) -> &[bool] {
        &self.support
    }

    pub fn h_values(&self) -> &[f64] {
        &self.h
    }

    /// Initial state: the preset sampled on the support; the homogenized
    /// problems start from the density-weighted preset.
    pub fn initial_state(&self) -> MaskedField {
        let g = &self.spec.grid;
        let mut u = MaskedField::zeros(g, self.support.clone()).expect("mask sized by grid");
        for k in 0..g.len() {
            if self.support[k] {
                let v = self.spec.u0.eval(g.dim, g.center_of(k));
                u.values[k] = if self.spec.equation.is_eps() {
                    v
                } else {
                    self.spec.density.values[k] * v
                };
            }
        }
        u
    }

    fn check_state(&self, u: &MaskedField) -> Result<()> {
        if u.grid != self.spec.grid {
            return Err(Error::GridMismatch("state grid mismatch".to_string()));
        }
        if u.mask != self.support {
            return Err(Error::Validation(
                "state mask does not match the problem support set".to_string(),
            ));
        }
        Ok(())
    }

    /// Source part `a (J * u) + a F(u)` on the support, zero elsewhere.
    fn source(&self, u: &MaskedField) -> Result<Vec<f64>> {
        let conv = convolve(&self.spec.kernel, u, 0.0)?;
        let n = self.spec.grid.len();
        let mut out = vec![0.0; n];
        match &self.reaction {
            ReactionOp::Averaged { ball, den } => {
                let num = convolve(ball, u, 0.0)?;
                for k in 0..n {
                    if self.support[k] {
                        let f = self.spec.g.eval(num.values[k] / den[k]);
                        out[k] = self.a[k] * (conv.values[k] + f);
                    }
                }
            }
            ReactionOp::Local { inv_density } => {
                for k in 0..n {
                    if self.support[k] {
                        let f = self.spec.g.eval(u.values[k] * inv_density[k]);
                        out[k] = self.a[k] * (conv.values[k] + f);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Right-hand side `a (J * u) - h u + a F(u)` on the support.
    pub fn rhs(&self, u: &MaskedField) -> Result<MaskedField> {
        self.check_state(u)?;
        let src = self.source(u)?;
        let mut out = MaskedField::zeros(&self.spec.grid, self.support.clone())?;
        for (k, &inside) in self.support.iter().enumerate() {
            if inside {
                out.values[k] = src[k] - self.h[k] * u.values[k];
            }
        }
        Ok(out)
    }

    /// Exponential step: exact decay, source frozen over the step.
    pub fn step_etd1(&self, u: &MaskedField, dt: f64) -> Result<MaskedField> {
        if dt <= 0.0 {
            return Err(Error::Config("step size must be positive".to_string()));
        }
        self.check_state(u)?;
        let src = self.source(u)?;
        let mut out = MaskedField::zeros(&self.spec.grid, self.support.clone())?;
        for (k, &inside) in self.support.iter().enumerate() {
            if inside {
                let z = self.h[k] * dt;
                out.values[k] = (-z).exp() * u.values[k] + phi1(z) * dt * src[k];
            }
        }
        Ok(out)
    }

    /// Forward Euler step; the first-order oracle.
    pub fn step_euler(&self, u: &MaskedField, dt: f64) -> Result<MaskedField> {
        if dt <= 0.0 {
            return Err(Error::Config("step size must be positive".to_string()));
        }
        let k1 = self.rhs(u)?;
        let mut out = u.clone();
        for k in 0..out.values.len() {
            out.values[k] += dt * k1.values[k];
        }
        out.apply_mask();
        Ok(out)
    }

    /// Classical fourth-order Runge-Kutta step.
    pub fn step_rk4(&self, u: &MaskedField, dt: f64) -> Result<MaskedField> {
        if dt <= 0.0 {
            return Err(Error::Config("step size must be positive".to_string()));
        }
        let add = |base: &MaskedField, k: &MaskedField, c: f64| -> MaskedField {
            let mut out = base.clone();
            for i in 0..out.values.len() {
                out.values[i] += c * k.values[i];
            }
            out
        };
        let k1 = self.rhs(u)?;
        let k2 = self.rhs(&add(u, &k1, 0.5 * dt))?;
        let k3 = self.rhs(&add(u, &k2, 0.5 * dt))?;
        let k4 = self.rhs(&add(u, &k3, dt))?;
        let mut out = u.clone();
        for i in 0..out.values.len() {
            out.values[i] +=
                dt / 6.0 * (k1.values[i] + 2.0 * k2.values[i] + 2.0 * k3.values[i] + k4.values[i]);
        }
        out.apply_mask();
        Ok(out)
    }

    fn step(&self, u: &MaskedField, dt: f64) -> Result<MaskedField> {
        match self.spec.scheme {
            Scheme::Etd1 => self.step_etd1(u, dt),
            Scheme::Euler => self.step_euler(u, dt),
            Scheme::Rk4 => self.step_rk4(u, dt),
        }
    }

    fn plan_steps(&self) -> Result<(usize, f64)> {
        let n = ((self.spec.t_final / self.spec.dt).round() as usize).max(1);
        let dt = self.spec.t_final / n as f64;
        if matches!(self.spec.scheme, Scheme::Euler | Scheme::Rk4) && self.h_max > 0.0 {
            let stability = 1.0 / (2.0 * self.h_max);
            if dt > stability {
                return Err(Error::Config(format!(
                    "step {dt:.4e} exceeds the explicit stability bound {stability:.4e}"
                )));
            }
        }
        Ok((n, dt))
    }

    fn integrate_core(&self, u_init: MaskedField, sample_indices: &[usize]) -> Result<Trajectory> {
        self.check_state(&u_init)?;
        let (n_steps, dt) = self.plan_steps()?;
        let mut u = u_init;
        u.apply_mask();
        let mut norm_log = Vec::with_capacity(n_steps + 1);
        norm_log.push(u.l2_norm());
        let mut times = Vec::with_capacity(sample_indices.len());
        let mut states = Vec::with_capacity(sample_indices.len());
        let mut next_sample = 0usize;
        if sample_indices.first() == Some(&0) {
            times.push(0.0);
            states.push(u.clone());
            next_sample = 1;
        }
        for step in 1..=n_steps {
            u = self.step(&u, dt)?;
            u.apply_mask();
            if u.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Solver(format!(
                    "non-finite state at step {step} (t = {:.6})",
                    step as f64 * dt
                )));
            }
            norm_log.push(u.l2_norm());
            if next_sample < sample_indices.len() && sample_indices[next_sample] == step {
                times.push(step as f64 * dt);
                states.push(u.clone());
                next_sample += 1;
            }
        }
        Ok(Trajectory {
            times,
            states,
            norm_log,
            dt,
        })
    }

    /// Integrates to the final time, sampling the state every
    /// `sample_stride` steps plus the endpoints.
    pub fn integrate(&self) -> Result<Trajectory> {
        let (n_steps, _) = self.plan_steps()?;
        let stride = self.spec.sample_stride;
        let mut indices: Vec<usize> = (0..=n_steps).filter(|i| i % stride == 0).collect();
        if indices.last() != Some(&n_steps) {
            indices.push(n_steps);
        }
        self.integrate_core(self.initial_state(), &indices)
    }

    /// Integrates and samples at the requested times, which must lie in
    /// `(0, t_final]`; each snaps to the nearest step.
    pub fn integrate_sampling(&self, sample_times: &[f64]) -> Result<Trajectory> {
        let indices = self.sample_indices(sample_times)?;
        self.integrate_core(self.initial_state(), &indices)
    }

    /// Same as [`integrate_sampling`](Self::integrate_sampling) but from a
    /// caller-supplied initial state.
    pub fn integrate_from(&self, u_init: MaskedField, sample_times: &[f64]) -> Result<Trajectory> {
        let indices = self.sample_indices(sample_times)?;
        self.integrate_core(u_init, &indices)
    }

    fn sample_indices(&self, sample_times: &[f64]) -> Result<Vec<usize>> {
        let (n_steps, dt) = self.plan_steps()?;
        let mut indices = Vec::with_capacity(sample_times.len());
        for &t in sample_times {
            if t <= 0.0 || t > self.spec.t_final * (1.0 + 1e-12) {
                return Err(Error::Config(format!(
                    "sample time {t} outside (0, {}]",
                    self.spec.t_final
                )));
            }
            let idx = ((t / dt).round() as usize).clamp(1, n_steps);
            indices.push(idx);
        }
        for w in indices.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Config(
                    "sample times must be strictly increasing and distinguishable at this step size"
                        .to_string(),
                ));
            }
        }
        Ok(indices)
    }

    /// Lipschitz bound of the composed reaction map in the L2 norms, from
    /// the averaging geometry and the measured minimum denominator.
    pub fn reaction_lipschitz(&self) -> f64 {
        let region_measure =
            self.support.iter().filter(|&&m| m).count() as f64 * self.spec.grid.cell_volume;
        match &self.reaction {
            ReactionOp::Averaged { ball, den } => {
                let den_min = den
                    .iter()
                    .zip(&self.support)
                    .filter(|(_, &m)| m)
                    .map(|(d, _)| *d)
                    .fold(f64::INFINITY, f64::min);
                self.spec.g.lipschitz() * (region_measure * ball.mass()).sqrt() / den_min
            }
            ReactionOp::Local { inv_density } => {
                let inv_max = inv_density
                    .iter()
                    .zip(&self.support)
                    .filter(|(_, &m)| m)
                    .map(|(v, _)| *v)
                    .fold(0.0f64, f64::max);
                self.spec.g.lipschitz() * inv_max
            }
        }
    }

    /// Trajectory of the time-rescaled problem compared back against this
    /// problem: with a constant density `d`, solving with unit diffusion
    /// coefficient, decay `h / d`, and step `d dt` up to `d t_final` must
    /// reproduce the original trajectory sample for sample.
    pub fn rescaled_equivalence_check(&self, sample_times: &[f64]) -> Result<f64> {
        if self.spec.equation.is_eps() {
            return Err(Error::Config(
                "rescaled equivalence is defined for the homogenized problems".to_string(),
            ));
        }
        let mut d = f64::NAN;
        for k in 0..self.spec.grid.len() {
            if self.support[k] {
                let v = self.spec.density.values[k];
                if d.is_nan() {
                    d = v;
                } else if (v - d).abs() > 1e-12 {
                    return Err(Error::Config(
                        "rescaled equivalence needs a constant density".to_string(),
                    ));
                }
            }
        }
        let base = self.integrate_sampling(sample_times)?;

        let mut scaled_spec = self.spec.clone();
        scaled_spec.dt = d * self.spec.dt;
        scaled_spec.t_final = d * self.spec.t_final;
        let mut scaled = Evolver::new(scaled_spec)?;
        for k in 0..scaled.a.len() {
            if scaled.support[k] {
                scaled.a[k] = 1.0;
                scaled.h[k] /= d;
            }
        }
        scaled.h_max /= d;
        let scaled_times: Vec<f64> = sample_times.iter().map(|t| d * t).collect();
        let w = scaled.integrate_from(self.initial_state(), &scaled_times)?;

        let mut worst = 0.0f64;
        for (ub, uw) in base.states.iter().zip(&w.states) {
            for k in 0..ub.values.len() {
                worst = worst.max((ub.values[k] - uw.values[k]).abs());
            }
        }
        Ok(worst)
    }
}

/// Norm-bound verdict for one trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub eta: f64,
    pub lambda1: f64,
    /// True when the eigenvalue solve was skipped or failed and the valid
    /// lower bound 0 was used instead.
    pub lambda1_fallback: bool,
    pub lipschitz_bound: f64,
    pub checked: usize,
    pub violations: usize,
    /// Smallest value of bound minus norm over the trajectory.
    pub worst_margin: f64,
}

/// Threshold above which the monitor skips the eigenvalue solve and uses the
/// lower bound 0; power iteration on large grids costs more than the bound
/// check is worth.
const LAMBDA1_GRID_LIMIT: usize = 64 * 64;

fn check_denominator(grid: &Grid, den: &[f64], region: &[bool], floor: f64) -> Result<()> {
    for k in 0..den.len() {
        if region[k] && den[k] < floor {
            let x = grid.center_of(k);
            return Err(Error::Validation(format!(
                "ball-average denominator {:.6e} below floor {:.6e} at ({:.4}, {:.4})",
                den[k], floor, x[0], x[1]
            )));
        }
    }
    Ok(())
}

/// Checks every logged norm against the a priori growth bound
/// `exp(2 (eta^2 - lambda1 + C / eta^2) t) (||u0|| + |Omega| |g(0)| t)`
/// with `C` the squared reaction Lipschitz bound.
///
/// Violations are counted, not thrown; the worst margin is reported either
/// way. The eigenvalue enters through a lower bound, so a failed or skipped
/// eigensolve falls back to 0 and the check stays valid.
pub fn bound_monitor(ev: &Evolver, traj: &Trajectory, eta: f64) -> Result<BoundReport> {
    if eta <= 0.0 {
        return Err(Error::Config(
            "bound parameter eta must be positive".to_string(),
        ));
    }
    let spec = ev.spec();
    let (lambda, fallback) = monitor_lambda1(ev);
    let l_f = ev.reaction_lipschitz();
    let c = l_f * l_f;
    let omega_measure = spec.chi_omega.mask_measure();
    let g0 = spec.g.g0().abs();
    let rate = 2.0 * (eta * eta - lambda + c / (eta * eta));
    let norm0 = traj.norm_log[0];
    let mut violations = 0usize;
    let mut worst = f64::INFINITY;
    for (i, &norm) in traj.norm_log.iter().enumerate() {
        let t = i as f64 * traj.dt;
        let bound = (rate * t).exp() * (norm0 + omega_measure * g0 * t);
        let margin = bound - norm;
        if margin < worst {
            worst = margin;
        }
        if margin < 0.0 {
            violations += 1;
        }
    }
    Ok(BoundReport {
        eta,
        lambda1: lambda,
        lambda1_fallback: fallback,
        lipschitz_bound: l_f,
        checked: traj.norm_log.len(),
        violations,
        worst_margin: worst,
    })
}

/// Eigenvalue lower bound for the monitor: the exact operator eigenvalue for
/// the perforated problem, the density-scaled one for constant-density
/// homogenized problems, 0 otherwise.
fn monitor_lambda1(ev: &Evolver) -> (f64, bool) {
    let spec = ev.spec();
    if spec.grid.len() > LAMBDA1_GRID_LIMIT {
        return (0.0, true);
    }
    let grid = &spec.grid;
    let support = ev.support();
    if spec.equation.is_eps() {
        let h_field = match MaskedField::from_values(grid, ev.h.clone(), vec![true; grid.len()]) {
            Ok(f) => f,
            Err(_) => return (0.0, true),
        };
        match spectral::lambda1(&spec.kernel, &h_field, support, 1e-8) {
            Ok(res) => (res.lambda1.max(0.0), false),
            Err(_) => (0.0, true),
        }
    } else {
        // a = density: with a constant density d the linear part is
        // d (h/d u - J * u), an exact scaling of the spectral operator.
        let mut d = f64::NAN;
        for (k, &inside) in support.iter().enumerate() {
            if inside {
                let v = spec.density.values[k];
                if d.is_nan() {
                    d = v;
                } else if (v - d).abs() > 1e-12 {
                    return (0.0, true);
                }
            }
        }
        let scaled: Vec<f64> = ev.h.iter().map(|h| h / d).collect();
        let h_field = match MaskedField::from_values(grid, scaled, vec![true; grid.len()]) {
            Ok(f) => f,
            Err(_) => return (0.0, true),
        };
        match spectral::lambda1(&spec.kernel, &h_field, support, 1e-8) {
            Ok(res) => ((d * res.lambda1).max(0.0), false),
            Err(_) => (0.0, true),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::kernel::{build_kernel, KernelFamily};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn interval_problem() -> ProblemSpec {
        // 8 cells on [0, 1], domain = cells 2..5, hand kernel of mass 1
        let grid = build_grid(1, 8, &[[0.0, 1.0]]).unwrap();
        let mask: Vec<bool> = (0..8).map(|k| (2..6).contains(&k)).collect();
        let chi = MaskedField::indicator(&grid, mask.clone()).unwrap();
        let kernel = KernelStencil::from_samples(
            &grid,
            0.2,
            vec![[-1, 0], [0, 0], [1, 0]],
            vec![2.0, 4.0, 2.0],
            false,
        )
        .unwrap();
        let density = MaskedField::constant(&grid, mask, 1.0).unwrap();
        ProblemSpec {
            grid,
            chi_omega: chi.clone(),
            chi_eps: chi,
            density,
            kernel,
            equation: EquationKind::EpsDirichlet,
            g: GSpec::Linear { a: 2.0, b: 0.5 },
            averaging: AveragingSpec {
                delta: 0.26,
                mode: AveragingMode::Perforated,
                denominator_floor: 1e-3,
            },
            u0: InitialPreset::Constant { value: 1.0 },
            t_final: 1.0,
            dt: 0.01,
            scheme: Scheme::Etd1,
            sample_stride: 10,
        }
    }

    #[test]
    fn rhs_matches_hand_table() {
        // With u = [.., 0.5, 1.0, -0.25, 0.75, ..] on the four domain cells:
        // J*u   = [0.5, 0.5625, 0.3125, 0.3125]
        // m     = [5/12, 0.5, 0.5, 0.5]
        // rhs   = J*u - u + (2 m + 0.5)
        let spec = interval_problem();
        let ev = Evolver::new(spec).unwrap();
        let mut u = MaskedField::zeros(&ev.spec().grid, ev.support().to_vec()).unwrap();
        u.values[2] = 0.5;
        u.values[3] = 1.0;
        u.values[4] = -0.25;
        u.values[5] = 0.75;
        let out = ev.rhs(&u).unwrap();
        let expected = [4.0 / 3.0, 1.0625, 2.0625, 1.0625];
        for (cell, want) in (2..6).zip(expected) {
            assert!(
                (out.values[cell] - want).abs() < 1e-12,
                "cell {cell}: {} vs {want}",
                out.values[cell]
            );
        }
        assert_eq!(out.values[0], 0.0);
        assert_eq!(out.values[7], 0.0);
    }

    #[test]
    fn zero_state_zero_g0_gives_zero_rhs() {
        let mut spec = interval_problem();
        spec.g = GSpec::Linear { a: 2.0, b: 0.0 };
        let ev = Evolver::new(spec).unwrap();
        let u = MaskedField::zeros(&ev.spec().grid, ev.support().to_vec()).unwrap();
        let out = ev.rhs(&u).unwrap();
        assert!(out.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn no_hole_problem_matches_unit_density_limit() {
        let grid = build_grid(2, 16, &[[0.0, 1.0], [0.0, 1.0]]).unwrap();
        let mask: Vec<bool> = (0..grid.len())
            .map(|k| {
                let x = grid.center_of(k);
                (x[0] - 0.5).abs() < 0.3 && (x[1] - 0.5).abs() < 0.3
            })
            .collect();
        let chi = MaskedField::indicator(&grid, mask.clone()).unwrap();
        let kernel = build_kernel(&grid, KernelFamily::Tent, 0.15).unwrap();
        let density = MaskedField::constant(&grid, mask.clone(), 1.0).unwrap();
        let base = ProblemSpec {
            grid: grid.clone(),
            chi_omega: chi.clone(),
            chi_eps: chi.clone(),
            density,
            kernel,
            equation: EquationKind::EpsDirichlet,
            g: GSpec::TanhScale { a: 0.9 },
            averaging: AveragingSpec {
                delta: 0.15,
                mode: AveragingMode::Perforated,
                denominator_floor: 1e-3,
            },
            u0: InitialPreset::GaussianBump {
                center: [0.5, 0.5],
                sigma: 0.1,
                amplitude: 1.0,
            },
            t_final: 0.5,
            dt: 0.01,
            scheme: Scheme::Etd1,
            sample_stride: 10,
        };
        let mut limit_spec = base.clone();
        limit_spec.equation = EquationKind::LimitDirichlet;
        limit_spec.averaging.mode = AveragingMode::Density;
        let eps_ev = Evolver::new(base).unwrap();
        let lim_ev = Evolver::new(limit_spec).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let vals: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let u = MaskedField::from_values(&grid, vals, mask).unwrap();
        let r1 = eps_ev.rhs(&u).unwrap();
        let r2 = lim_ev.rhs(&u).unwrap();
        for k in 0..grid.len() {
            assert!((r1.values[k] - r2.values[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn etd1_is_exact_decay_without_coupling() {
        let mut spec = interval_problem();
        spec.kernel =
            KernelStencil::from_samples(&spec.grid, 0.2, vec![[0, 0]], vec![0.0], false).unwrap();
        spec.g = GSpec::Linear { a: 0.0, b: 0.0 };
        let ev = Evolver::new(spec).unwrap();
        let mut u = MaskedField::zeros(&ev.spec().grid, ev.support().to_vec()).unwrap();
        u.values[2] = 0.4;
        u.values[3] = -1.2;
        u.values[4] = 0.9;
        u.values[5] = 0.1;
        let dt = 0.17;
        let out = ev.step_etd1(&u, dt).unwrap();
        for k in 2..6 {
            assert!((out.values[k] - (-dt).exp() * u.values[k]).abs() < 1e-16);
        }
    }

    #[test]
    fn phi1_branches_agree() {
        assert_eq!(phi1(0.0), 1.0);
        assert!((phi1(2.0) - (1.0 - (-2.0f64).exp()) / 2.0).abs() < 1e-15);
        // at the branch point the series and the exact formula coincide to
        // machine precision
        let z = 1e-6f64;
        let series = 1.0 - z / 2.0 + z * z / 6.0;
        let exact = -(-z).exp_m1() / z;
        assert!((series - exact).abs() < 1e-15);
    }

    #[test]
    fn masked_region_stays_zero_for_all_schemes() {
        for scheme in [Scheme::Etd1, Scheme::Euler, Scheme::Rk4] {
            let mut spec = interval_problem();
            spec.scheme = scheme;
            spec.t_final = 0.2;
            spec.dt = 0.02;
            let ev = Evolver::new(spec).unwrap();
            let traj = ev.integrate().unwrap();
            for state in &traj.states {
                for k in [0usize, 1, 6, 7] {
                    assert_eq!(state.values[k], 0.0);
                }
            }
        }
    }

    #[test]
    fn sampling_validates_times() {
        let spec = interval_problem();
        let ev = Evolver::new(spec).unwrap();
        assert!(ev.integrate_sampling(&[0.5, 1.0]).is_ok());
        assert!(ev.integrate_sampling(&[0.0]).is_err());
        assert!(ev.integrate_sampling(&[1.5]).is_err());
        assert!(ev.integrate_sampling(&[0.5, 0.5]).is_err());
    }

    #[test]
    fn averaging_mode_must_match_equation() {
        let mut spec = interval_problem();
        spec.averaging.mode = AveragingMode::Density;
        assert!(matches!(Evolver::new(spec), Err(Error::Config(_))));
    }

    #[test]
    fn rescaled_run_reproduces_unit_density_trajectory() {
        let mut spec = interval_problem();
        spec.equation = EquationKind::LimitDirichlet;
        spec.averaging.mode = AveragingMode::Density;
        spec.t_final = 0.5;
        let ev = Evolver::new(spec).unwrap();
        let dev = ev.rescaled_equivalence_check(&[0.25, 0.5]).unwrap();
        assert!(dev < 1e-12, "deviation {dev}");
    }

    #[test]
    fn bound_monitor_holds_on_decay_problem() {
        let mut spec = interval_problem();
        spec.g = GSpec::Linear { a: 0.0, b: 0.0 };
        spec.kernel =
            KernelStencil::from_samples(&spec.grid, 0.2, vec![[0, 0]], vec![0.0], false).unwrap();
        spec.t_final = 1.0;
        spec.u0 = InitialPreset::Constant { value: 1.0 };
        let ev = Evolver::new(spec).unwrap();
        let traj = ev.integrate().unwrap();
        let report = bound_monitor(&ev, &traj, 1.0).unwrap();
        assert_eq!(report.violations, 0);
        // pure decay: norm shrinks as e^{-t} while the bound grows
        assert!(report.worst_margin >= 0.0);
    }
}
