//! Sweep orchestration: the perforated problems against their homogenized
//! limit as the period shrinks, and the homogenized problems against the
//! local-reaction limit as the averaging radius shrinks.
//!
//! Members of a sweep integrate concurrently on a work pool capped by
//! `NLHOM_THREADS`; each member is internally sequential and the records are
//! assembled in value order after the join, so reports are deterministic.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evolution::{bound_monitor, EquationKind, Evolver, ProblemSpec};
use crate::field::MaskedField;
use crate::geometry::{periodic_material_fraction, DomainShape, PerforationSpec};
use crate::grid::Grid;
use crate::harness::config::{build_problem, config_hash, Config, SweepKind};
use crate::harness::report::{
    GridMeta, KernelMeta, L2Entry, SweepRecord, SweepReport, WeakErrorEntry,
};
use crate::kernel::{convolve, kahan_sum, BcFlavor};
use crate::nonlinearity::{ball_stencil, AveragingMode};

/// One named test function sampled on the grid.
#[derive(Debug, Clone)]
pub struct TestFunction {
    pub name: String,
    pub values: Vec<f64>,
}

/// The fixed dictionary: constants, coordinates, one quadratic, and gaussian
/// bumps at interior probe points (the domain center and its diagonal
/// neighbors at 40% of the half extent).
pub fn test_dictionary(grid: &Grid, shape: &DomainShape) -> Vec<TestFunction> {
    let mut center = [0.0; 2];
    let mut half = [0.0; 2];
    for axis in 0..grid.dim {
        let b = shape.bounds(axis);
        center[axis] = 0.5 * (b[0] + b[1]);
        half[axis] = 0.5 * (b[1] - b[0]);
    }
    let mut dict = Vec::new();
    let sample = |f: &dyn Fn([f64; 2]) -> f64| -> Vec<f64> {
        (0..grid.len()).map(|k| f(grid.center_of(k))).collect()
    };
    dict.push(TestFunction {
        name: "one".to_string(),
        values: sample(&|_| 1.0),
    });
    dict.push(TestFunction {
        name: "x1".to_string(),
        values: sample(&|x| x[0]),
    });
    if grid.dim == 2 {
        dict.push(TestFunction {
            name: "x2".to_string(),
            values: sample(&|x| x[1]),
        });
    }
    dict.push(TestFunction {
        name: "x1_sq".to_string(),
        values: sample(&|x| x[0] * x[0]),
    });
    let sigma = 0.35
        * half[..grid.dim]
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
    let probes: Vec<[f64; 2]> = if grid.dim == 1 {
        vec![
            [center[0], 0.0],
            [center[0] + 0.4 * half[0], 0.0],
            [center[0] - 0.4 * half[0], 0.0],
        ]
    } else {
        vec![
            [center[0], center[1]],
            [center[0] + 0.4 * half[0], center[1] + 0.4 * half[1]],
            [center[0] + 0.4 * half[0], center[1] - 0.4 * half[1]],
            [center[0] - 0.4 * half[0], center[1] + 0.4 * half[1]],
            [center[0] - 0.4 * half[0], center[1] - 0.4 * half[1]],
        ]
    };
    for (i, p) in probes.iter().enumerate() {
        let p = *p;
        dict.push(TestFunction {
            name: format!("gauss_{}", i + 1),
            values: sample(&|x| {
                let mut r2 = 0.0;
                for a in 0..grid.dim {
                    r2 += (x[a] - p[a]) * (x[a] - p[a]);
                }
                (-0.5 * r2 / (sigma * sigma)).exp()
            }),
        });
    }
    dict
}

/// Filters the dictionary by requested names, keeping dictionary order.
pub fn select_test_functions(
    dict: Vec<TestFunction>,
    requested: Option<&[String]>,
) -> Result<Vec<TestFunction>> {
    match requested {
        None => Ok(dict),
        Some(names) => {
            for name in names {
                if !dict.iter().any(|f| &f.name == name) {
                    return Err(Error::Config(format!("unknown test function {name}")));
                }
            }
            Ok(dict
                .into_iter()
                .filter(|f| names.contains(&f.name))
                .collect())
        }
    }
}

/// `|sum phi (u - v) cell_volume|`: the tested weak-convergence functional.
/// Both fields are zero off their masks, so this is the integral of the
/// difference of zero extensions against `phi`.
pub fn weak_error(u: &MaskedField, v: &MaskedField, phi: &[f64]) -> Result<f64> {
    u.check_same_grid(v)?;
    if phi.len() != u.values.len() {
        return Err(Error::GridMismatch(format!(
            "test function has {} samples for {} cells",
            phi.len(),
            u.values.len()
        )));
    }
    let total = kahan_sum((0..u.values.len()).map(|k| phi[k] * (u.values[k] - v.values[k])));
    Ok((total * u.grid.cell_volume).abs())
}

/// L2 norm of the difference of zero extensions.
pub fn l2_distance(u: &MaskedField, v: &MaskedField) -> Result<f64> {
    u.check_same_grid(v)?;
    let sq = kahan_sum((0..u.values.len()).map(|k| {
        let d = u.values[k] - v.values[k];
        d * d
    }));
    Ok((sq * u.grid.cell_volume).sqrt())
}

/// Pointwise defect between the homogenized right-hand side and its
/// equivalent form in the reciprocal density `rho = 1 / density`, valid for
/// constant densities:
/// `rho u_t = J * u - rho h u + g(rho m_B)` with `m_B` the ball average
/// against the plain domain indicator. Returns the maximum absolute
/// difference over the support for the given state.
pub fn rho_form_residual(ev: &Evolver, u: &MaskedField) -> Result<f64> {
    let spec = ev.spec();
    if !matches!(
        spec.equation,
        EquationKind::LimitDirichlet | EquationKind::LimitNeumann
    ) {
        return Err(Error::Config(
            "the reciprocal-density form applies to the homogenized equations".to_string(),
        ));
    }
    let support = ev.support();
    let mut d = f64::NAN;
    for (k, &inside) in support.iter().enumerate() {
        if inside {
            let v = spec.density.values[k];
            if d.is_nan() {
                d = v;
            } else if (v - d).abs() > 1e-12 {
                return Err(Error::Config(
                    "the reciprocal-density form needs a constant density".to_string(),
                ));
            }
        }
    }
    let rho = 1.0 / d;
    let ball = ball_stencil(&spec.grid, spec.averaging.delta)?;
    let den_b = convolve(&ball, &spec.chi_omega, 0.0)?;
    let num = convolve(&ball, u, 0.0)?;
    let ju = convolve(&spec.kernel, u, 0.0)?;
    let jchi = convolve(&spec.kernel, &spec.chi_omega, 0.0)?;
    let std_rhs = ev.rhs(u)?;
    let mut worst = 0.0f64;
    for (k, &inside) in support.iter().enumerate() {
        if !inside {
            continue;
        }
        let m_b = num.values[k] / den_b.values[k];
        let reaction = spec.g.eval(rho * m_b);
        let alt = match spec.equation.bc() {
            BcFlavor::Dirichlet => ju.values[k] - rho * u.values[k] + reaction,
            BcFlavor::Neumann => {
                ju.values[k]
                    - jchi.values[k] * u.values[k]
                    - rho * (1.0 - jchi.values[k]) * u.values[k]
                    + reaction
            }
        };
        worst = worst.max((rho * std_rhs.values[k] - alt).abs());
    }
    Ok(worst)
}

fn tag_member(err: Error, label: &str) -> Error {
    match err {
        Error::Config(m) => Error::Config(format!("{label}: {m}")),
        Error::GridMismatch(m) => Error::GridMismatch(format!("{label}: {m}")),
        Error::Validation(m) => Error::Validation(format!("{label}: {m}")),
        Error::Solver(m) => Error::Solver(format!("{label}: {m}")),
        other => other,
    }
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var("NLHOM_THREADS") {
        let n: usize = raw.parse().ok().filter(|n| *n > 0).ok_or_else(|| {
            Error::Config(format!(
                "NLHOM_THREADS must be a positive integer, got {raw:?}"
            ))
        })?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::Solver(format!("cannot build worker pool: {e}")))
}

struct MemberMetrics {
    weak_errors: Vec<WeakErrorEntry>,
    l2_distances: Vec<L2Entry>,
    max_weak_error: f64,
}

fn compare_member(
    member_states: &[MaskedField],
    reference_states: &[MaskedField],
    sample_times: &[f64],
    dict: &[TestFunction],
) -> Result<MemberMetrics> {
    let mut weak_errors = Vec::with_capacity(dict.len() * sample_times.len());
    let mut max_weak = 0.0f64;
    for phi in dict {
        for (i, &t) in sample_times.iter().enumerate() {
            let e = weak_error(&member_states[i], &reference_states[i], &phi.values)?;
            max_weak = max_weak.max(e);
            weak_errors.push(WeakErrorEntry {
                test_function: phi.name.clone(),
                sample_time: t,
                weak_error: e,
            });
        }
    }
    let mut l2_distances = Vec::with_capacity(sample_times.len());
    for (i, &t) in sample_times.iter().enumerate() {
        l2_distances.push(L2Entry {
            sample_time: t,
            l2_distance: l2_distance(&member_states[i], &reference_states[i])?,
        });
    }
    Ok(MemberMetrics {
        weak_errors,
        l2_distances,
        max_weak_error: max_weak,
    })
}

fn report_meta(cfg: &Config, spec: &ProblemSpec) -> (GridMeta, KernelMeta) {
    let grid = GridMeta {
        dim: spec.grid.dim,
        n: spec.grid.n,
        h: spec.grid.h,
        points: spec.grid.len(),
        field_bytes: spec.grid.len() * std::mem::size_of::<f64>(),
    };
    let kernel = KernelMeta {
        family: cfg.kernel.family,
        support_radius: cfg.kernel.support_radius,
        stencil_points: spec.kernel.extent(),
        mass: spec.kernel.mass(),
    };
    (grid, kernel)
}

/// Integrates the perforated problem for every value of the period and the
/// homogenized limit once, and records the weak errors of the zero-extended
/// states against the limit at the sample times.
pub fn run_eps_sweep(cfg: &Config) -> Result<SweepReport> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("eps sweep needs a sweep section".to_string()))?;
    if sweep.kind != SweepKind::Eps {
        return Err(Error::Config("sweep kind must be eps".to_string()));
    }
    if !cfg.problem.equation.is_eps() {
        return Err(Error::Config(
            "eps sweep needs a perforated-problem equation".to_string(),
        ));
    }
    let radius_ratio = match cfg.perforation {
        PerforationSpec::PeriodicBalls { radius_ratio, .. } => radius_ratio,
        _ => {
            return Err(Error::Config(
                "eps sweep needs a periodic perforation family".to_string(),
            ));
        }
    };

    let base = build_problem(cfg)?;
    let dict = select_test_functions(
        test_dictionary(&base.grid, &cfg.domain.shape()?),
        sweep.test_functions.as_deref(),
    )?;
    let eta = cfg.problem.bound_eta.unwrap_or(1.0);

    let limit_equation = match cfg.problem.equation.bc() {
        BcFlavor::Dirichlet => EquationKind::LimitDirichlet,
        BcFlavor::Neumann => EquationKind::LimitNeumann,
    };
    let mut limit_spec = base.clone();
    limit_spec.chi_eps = limit_spec.chi_omega.clone();
    limit_spec.density = MaskedField::constant(
        &limit_spec.grid,
        limit_spec.chi_omega.mask.clone(),
        periodic_material_fraction(limit_spec.grid.dim, radius_ratio),
    )?;
    limit_spec.equation = limit_equation;
    limit_spec.averaging.mode = AveragingMode::Density;
    let limit_start = Instant::now();
    let limit_ev = Evolver::new(limit_spec).map_err(|e| tag_member(e, "limit problem"))?;
    let limit_traj = limit_ev
        .integrate_sampling(&sweep.sample_times)
        .map_err(|e| tag_member(e, "limit problem"))?;
    let limit_wall_ms = limit_start.elapsed().as_millis() as u64;

    let pool = thread_pool()?;
    let records: Vec<SweepRecord> = pool.install(|| {
        sweep
            .values
            .par_iter()
            .map(|&eps| -> Result<SweepRecord> {
                let label = format!("member eps={eps}");
                let start = Instant::now();
                let mut member_cfg = cfg.clone();
                member_cfg.perforation = PerforationSpec::PeriodicBalls { eps, radius_ratio };
                let spec = build_problem(&member_cfg).map_err(|e| tag_member(e, &label))?;
                let ev = Evolver::new(spec).map_err(|e| tag_member(e, &label))?;
                let traj = ev
                    .integrate_sampling(&sweep.sample_times)
                    .map_err(|e| tag_member(e, &label))?;
                let metrics =
                    compare_member(&traj.states, &limit_traj.states, &sweep.sample_times, &dict)
                        .map_err(|e| tag_member(e, &label))?;
                let bound = bound_monitor(&ev, &traj, eta).map_err(|e| tag_member(e, &label))?;
                Ok(SweepRecord {
                    sweep_value: eps,
                    equation: cfg.problem.equation.name().to_string(),
                    max_weak_error: metrics.max_weak_error,
                    l2_at_final: metrics
                        .l2_distances
                        .last()
                        .map(|e| e.l2_distance)
                        .unwrap_or(0.0),
                    weak_errors: metrics.weak_errors,
                    l2_distances: metrics.l2_distances,
                    bound,
                    rho_form_residual: None,
                    wall_ms: start.elapsed().as_millis() as u64,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let (grid_meta, kernel_meta) = report_meta(cfg, &base);
    Ok(SweepReport {
        sweep_kind: SweepKind::Eps,
        config_hash: config_hash(cfg),
        config: cfg.clone(),
        grid: grid_meta,
        kernel: kernel_meta,
        test_functions: dict.iter().map(|f| f.name.clone()).collect(),
        sample_times: sweep.sample_times.clone(),
        limit_equation: limit_equation.name().to_string(),
        limit_wall_ms,
        records,
    })
}

/// Integrates the homogenized problem for every averaging radius and the
/// local-reaction limit once, recording the same metrics plus the
/// reciprocal-density form residual when the density is constant.
pub fn run_delta_sweep(cfg: &Config) -> Result<SweepReport> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("delta sweep needs a sweep section".to_string()))?;
    if sweep.kind != SweepKind::Delta {
        return Err(Error::Config("sweep kind must be delta".to_string()));
    }
    if !matches!(
        cfg.problem.equation,
        EquationKind::LimitDirichlet | EquationKind::LimitNeumann
    ) {
        return Err(Error::Config(
            "delta sweep needs a homogenized equation".to_string(),
        ));
    }

    let base = build_problem(cfg)?;
    let dict = select_test_functions(
        test_dictionary(&base.grid, &cfg.domain.shape()?),
        sweep.test_functions.as_deref(),
    )?;
    let eta = cfg.problem.bound_eta.unwrap_or(1.0);

    let reference_equation = match cfg.problem.equation.bc() {
        BcFlavor::Dirichlet => EquationKind::DeltaZeroDirichlet,
        BcFlavor::Neumann => EquationKind::DeltaZeroNeumann,
    };
    let mut reference_spec = base.clone();
    reference_spec.equation = reference_equation;
    reference_spec.averaging.mode = AveragingMode::Local;
    let ref_start = Instant::now();
    let reference_ev =
        Evolver::new(reference_spec).map_err(|e| tag_member(e, "local-limit problem"))?;
    let reference_traj = reference_ev
        .integrate_sampling(&sweep.sample_times)
        .map_err(|e| tag_member(e, "local-limit problem"))?;
    let limit_wall_ms = ref_start.elapsed().as_millis() as u64;

    let pool = thread_pool()?;
    let records: Vec<SweepRecord> = pool.install(|| {
        sweep
            .values
            .par_iter()
            .map(|&delta| -> Result<SweepRecord> {
                let label = format!("member delta={delta}");
                let start = Instant::now();
                let mut member_cfg = cfg.clone();
                member_cfg.averaging.delta = delta;
                let spec = build_problem(&member_cfg).map_err(|e| tag_member(e, &label))?;
                let ev = Evolver::new(spec).map_err(|e| tag_member(e, &label))?;
                let traj = ev
                    .integrate_sampling(&sweep.sample_times)
                    .map_err(|e| tag_member(e, &label))?;
                let metrics = compare_member(
                    &traj.states,
                    &reference_traj.states,
                    &sweep.sample_times,
                    &dict,
                )
                .map_err(|e| tag_member(e, &label))?;
                let bound = bound_monitor(&ev, &traj, eta).map_err(|e| tag_member(e, &label))?;
                let final_state = traj.states.last().expect("at least one sample");
                let rho_residual = match rho_form_residual(&ev, final_state) {
                    Ok(r) => Some(r),
                    Err(Error::Config(_)) => None,
                    Err(other) => return Err(tag_member(other, &label)),
                };
                Ok(SweepRecord {
                    sweep_value: delta,
                    equation: cfg.problem.equation.name().to_string(),
                    max_weak_error: metrics.max_weak_error,
                    l2_at_final: metrics
                        .l2_distances
                        .last()
                        .map(|e| e.l2_distance)
                        .unwrap_or(0.0),
                    weak_errors: metrics.weak_errors,
                    l2_distances: metrics.l2_distances,
                    bound,
                    rho_form_residual: rho_residual,
                    wall_ms: start.elapsed().as_millis() as u64,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let (grid_meta, kernel_meta) = report_meta(cfg, &base);
    Ok(SweepReport {
        sweep_kind: SweepKind::Delta,
        config_hash: config_hash(cfg),
        config: cfg.clone(),
        grid: grid_meta,
        kernel: kernel_meta,
        test_functions: dict.iter().map(|f| f.name.clone()).collect(),
        sample_times: sweep.sample_times.clone(),
        limit_equation: reference_equation.name().to_string(),
        limit_wall_ms,
        records,
    })
}
