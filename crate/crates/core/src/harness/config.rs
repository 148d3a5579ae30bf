//! JSON configuration: one document with sections for the grid, the domain,
//! the perforation, the kernel, the reaction, the averaging ball, the
//! problem, and optional sweep and output settings. Unknown keys are
//! rejected everywhere, and the canonical re-serialization of a parsed
//! document is what gets hashed into reports.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evolution::{EquationKind, Evolver, InitialPreset, ProblemSpec, Scheme};
use crate::geometry::{
    domain_mask, effective_density, perforate, DensityMode, DomainShape, PerforationSpec,
};
use crate::grid::build_grid;
use crate::kernel::{build_kernel, KernelFamily};
use crate::nonlinearity::{AveragingSpec, GSpec};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dim: usize,
    pub n: usize,
    pub bounds: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Square,
    Disk,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub shape: ShapeKind,
    pub center: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<DensityMode>,
    #[serde(default = "default_density_floor")]
    pub density_floor: f64,
}

fn default_density_floor() -> f64 {
    1e-3
}

impl DomainSection {
    pub fn shape(&self) -> Result<DomainShape> {
        match self.shape {
            ShapeKind::Square => {
                let half_width = self
                    .half_width
                    .ok_or_else(|| Error::Config("square domain needs half_width".to_string()))?;
                Ok(DomainShape::Square {
                    center: self.center,
                    half_width,
                })
            }
            ShapeKind::Disk => {
                let radius = self
                    .radius
                    .ok_or_else(|| Error::Config("disk domain needs radius".to_string()))?;
                Ok(DomainShape::Disk {
                    center: self.center,
                    radius,
                })
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub family: KernelFamily,
    pub support_radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub equation: EquationKind,
    pub u0: InitialPreset,
    pub t_final: f64,
    pub dt: f64,
    pub scheme: Scheme,
    #[serde(default = "default_sample_stride")]
    pub sample_stride: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound_eta: Option<f64>,
}

fn default_sample_stride() -> usize {
    10
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Eps,
    Delta,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub kind: SweepKind,
    /// Strictly decreasing positive values of the swept scale.
    pub values: Vec<f64>,
    /// Comparison instants, strictly increasing within `(0, t_final]`.
    pub sample_times: Vec<f64>,
    /// Subset of the test-function dictionary to use; all entries if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_functions: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default = "default_true")]
    pub snapshots: bool,
    #[serde(default)]
    pub heatmap: bool,
    #[serde(default)]
    pub pgm: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub grid: GridSection,
    pub domain: DomainSection,
    #[serde(default = "default_perforation")]
    pub perforation: PerforationSpec,
    pub kernel: KernelSection,
    pub g: GSpec,
    pub averaging: AveragingSpec,
    pub problem: ProblemSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSection>,
}

fn default_perforation() -> PerforationSpec {
    PerforationSpec::None
}

/// Reads and validates a config document.
pub fn load_config(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    let cfg: Config = serde_json::from_str(&text)?;
    validate_config(&cfg)?;
    Ok(cfg)
}

/// Structural checks beyond what deserialization enforces.
pub fn validate_config(cfg: &Config) -> Result<()> {
    if cfg.problem.t_final <= 0.0 || cfg.problem.dt <= 0.0 {
        return Err(Error::Config("t_final and dt must be positive".to_string()));
    }
    if let Some(eta) = cfg.problem.bound_eta {
        if eta <= 0.0 {
            return Err(Error::Config("bound_eta must be positive".to_string()));
        }
    }
    cfg.domain.shape()?;
    if let Some(sweep) = &cfg.sweep {
        if sweep.values.is_empty() {
            return Err(Error::Config("sweep values must be nonempty".to_string()));
        }
        for w in sweep.values.windows(2) {
            if w[1] >= w[0] {
                return Err(Error::Config(
                    "sweep values must be strictly decreasing".to_string(),
                ));
            }
        }
        if sweep.values.iter().any(|v| *v <= 0.0) {
            return Err(Error::Config("sweep values must be positive".to_string()));
        }
        if sweep.sample_times.is_empty() {
            return Err(Error::Config(
                "sweep sample_times must be nonempty".to_string(),
            ));
        }
        for w in sweep.sample_times.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Config(
                    "sample_times must be strictly increasing".to_string(),
                ));
            }
        }
        let t_final = cfg.problem.t_final;
        if sweep
            .sample_times
            .iter()
            .any(|t| *t <= 0.0 || *t > t_final * (1.0 + 1e-12))
        {
            return Err(Error::Config(format!(
                "sample_times must lie in (0, {t_final}]"
            )));
        }
    }
    Ok(())
}

/// SHA-256 of the canonical re-serialized document, as lowercase hex.
pub fn config_hash(cfg: &Config) -> String {
    let canonical = serde_json::to_string(cfg).expect("config serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Assembles the full problem described by a config: grid, masks, density,
/// kernel, and the evolution parameters.
pub fn build_problem(cfg: &Config) -> Result<ProblemSpec> {
    validate_config(cfg)?;
    let grid = build_grid(cfg.grid.dim, cfg.grid.n, &cfg.grid.bounds)?;
    let shape = cfg.domain.shape()?;
    let chi_omega = domain_mask(&grid, &shape, cfg.kernel.support_radius)?;
    let kernel = build_kernel(&grid, cfg.kernel.family, cfg.kernel.support_radius)?;
    // the coverage bound guards the perforated-mode averaging denominators;
    // problems that never form them (density and local modes) may keep a
    // perforation purely as the source of their density field
    let coverage_floor = if cfg.averaging.mode == crate::nonlinearity::AveragingMode::Perforated {
        cfg.averaging.denominator_floor
    } else {
        0.0
    };
    let (chi_eps, _removed) = perforate(
        &grid,
        &chi_omega,
        &shape,
        &cfg.perforation,
        cfg.averaging.delta,
        coverage_floor,
    )?;
    let density_mode = match &cfg.domain.density {
        Some(mode) => *mode,
        None => match cfg.perforation {
            PerforationSpec::None | PerforationSpec::PeriodicBalls { .. } => DensityMode::Analytic,
            PerforationSpec::RandomBalls { .. } => {
                return Err(Error::Config(
                    "random perforation needs an explicit density mode".to_string(),
                ));
            }
        },
    };
    let density = effective_density(
        &grid,
        &chi_omega,
        &chi_eps,
        &cfg.perforation,
        &density_mode,
        cfg.domain.density_floor,
    )?;
    Ok(ProblemSpec {
        grid,
        chi_omega,
        chi_eps,
        density,
        kernel,
        equation: cfg.problem.equation,
        g: cfg.g,
        averaging: cfg.averaging,
        u0: cfg.problem.u0,
        t_final: cfg.problem.t_final,
        dt: cfg.problem.dt,
        scheme: cfg.problem.scheme,
        sample_stride: cfg.problem.sample_stride,
    })
}

/// Convenience: config straight to a ready evolver.
pub fn make_evolver(cfg: &Config) -> Result<Evolver> {
    Evolver::new(build_problem(cfg)?)
}

/// A small ready-to-run document used by tests and as a starting point.
pub fn example_config() -> Config {
    Config {
        grid: GridSection {
            dim: 2,
            n: 128,
            bounds: vec![[0.0, 1.0], [0.0, 1.0]],
        },
        domain: DomainSection {
            shape: ShapeKind::Square,
            center: [0.5, 0.5],
            half_width: Some(0.3),
            radius: None,
            density: None,
            density_floor: 1e-3,
        },
        perforation: PerforationSpec::PeriodicBalls {
            eps: 0.125,
            radius_ratio: 0.5,
        },
        kernel: KernelSection {
            family: KernelFamily::Tent,
            support_radius: 0.12,
        },
        g: GSpec::TanhScale { a: 0.8 },
        averaging: AveragingSpec {
            delta: 0.15,
            mode: crate::nonlinearity::AveragingMode::Perforated,
            denominator_floor: 1e-3,
        },
        problem: ProblemSection {
            equation: EquationKind::EpsDirichlet,
            u0: InitialPreset::GaussianBump {
                center: [0.5, 0.5],
                sigma: 0.1,
                amplitude: 1.0,
            },
            t_final: 1.0,
            dt: 0.01,
            scheme: Scheme::Etd1,
            sample_stride: 10,
            bound_eta: Some(1.0),
        },
        sweep: Some(SweepSection {
            kind: SweepKind::Eps,
            values: vec![0.125, 0.0625, 0.03125],
            sample_times: vec![0.5, 1.0],
            test_functions: None,
        }),
        output: None,
    }
}
