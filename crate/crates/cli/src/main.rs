//! Command-line front end: single trajectory runs, eps and delta sweeps,
//! eigenvalue probes, config validation with a margin table, and re-rendering
//! of stored reports.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nlhom_core::error::Error;
use nlhom_core::export::{render_heatmap_svg, write_field_csv, write_mask_pgm, write_trajectory};
use nlhom_core::field::MaskedField;
use nlhom_core::geometry::DomainShape;
use nlhom_core::harness::{
    config_hash, load_config, load_report, make_evolver, render_csv, render_svg, rho_form_residual,
    run_delta_sweep, run_eps_sweep, write_report, SweepKind,
};
use nlhom_core::kernel::convolve;
use nlhom_core::nonlinearity::{
    appendix_gradient_check, ball_stencil, AnalyticField, AveragingMode,
};
use nlhom_core::spectral::lambda1;

#[derive(Parser)]
#[command(
    name = "nlhom",
    version,
    about = "Nonlocal evolution on perforated domains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the configured problem and export the trajectory.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to the config's output.dir, then "out".
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate each eps member against the homogenized limit and write a report.
    SweepEps {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Integrate each averaging radius against the local-reaction limit and write a report.
    SweepDelta {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the smallest eigenvalue of the configured linear operator.
    Eigen {
        #[arg(long)]
        config: PathBuf,
        /// Optional CSV path for the eigenfield.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check kernel normalization, averaging coverage, the boundary-derivative
    /// identity, and the reciprocal-density form on the configured problem.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Re-render the CSV table and SVG error plot from a stored report.json.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Configuration problems exit 2, runtime and validation failures exit 1.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Json(_) => 2,
        _ => 1,
    }
}

fn dispatch(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Run { config, out } => cmd_run(&config, out),
        Command::SweepEps { config, out } => cmd_sweep(&config, &out, SweepKind::Eps),
        Command::SweepDelta { config, out } => cmd_sweep(&config, &out, SweepKind::Delta),
        Command::Eigen { config, out } => cmd_eigen(&config, out),
        Command::Validate { config } => cmd_validate(&config),
        Command::Report { input, out } => cmd_report(&input, &out),
    }
}

fn cmd_run(config: &Path, out: Option<PathBuf>) -> Result<ExitCode, Error> {
    let cfg = load_config(config)?;
    let (snapshots, heatmap, pgm, cfg_dir) = match &cfg.output {
        Some(o) => (o.snapshots, o.heatmap, o.pgm, o.dir.clone()),
        None => (true, false, false, None),
    };
    let dir = out
        .or(cfg_dir.map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let ev = make_evolver(&cfg)?;
    let traj = ev.integrate()?;
    let mut written = write_trajectory(&dir, &traj, &config_hash(&cfg), snapshots)?;
    if heatmap {
        if let Some(state) = traj.states.last() {
            let path = dir.join("state_final.svg");
            std::fs::write(&path, render_heatmap_svg(state))?;
            written.push(path);
        }
    }
    if pgm {
        let support = MaskedField::indicator(&ev.spec().grid, ev.support().to_vec())?;
        let path = dir.join("support.pgm");
        write_mask_pgm(&path, &support)?;
        written.push(path);
    }
    let steps = traj.norm_log.len().saturating_sub(1);
    let final_norm = traj.norm_log.last().copied().unwrap_or(0.0);
    println!(
        "integrated {} steps to t = {}, final l2 norm {final_norm:.6e}",
        steps,
        ev.spec().t_final
    );
    println!("wrote {} files to {}", written.len(), dir.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(config: &Path, out: &Path, kind: SweepKind) -> Result<ExitCode, Error> {
    let cfg = load_config(config)?;
    let report = match kind {
        SweepKind::Eps => run_eps_sweep(&cfg)?,
        SweepKind::Delta => run_delta_sweep(&cfg)?,
    };
    println!(
        "{:>12} {:>14} {:>14} {:>8}",
        "value", "max_weak_err", "l2_at_final", "bound"
    );
    for r in &report.records {
        let bound = if r.bound.violations == 0 {
            "ok"
        } else {
            "violated"
        };
        println!(
            "{:>12.6} {:>14.6e} {:>14.6e} {:>8}",
            r.sweep_value, r.max_weak_error, r.l2_at_final, bound
        );
    }
    for path in write_report(&report, out)? {
        println!("wrote {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_eigen(config: &Path, out: Option<PathBuf>) -> Result<ExitCode, Error> {
    let cfg = load_config(config)?;
    let ev = make_evolver(&cfg)?;
    let spec = ev.spec();
    let h = MaskedField::from_values(
        &spec.grid,
        ev.h_values().to_vec(),
        vec![true; spec.grid.len()],
    )?;
    let result = lambda1(&spec.kernel, &h, ev.support(), 1e-8)?;
    let mut json = serde_json::to_string_pretty(&result)?;
    json.push('\n');
    print!("{json}");
    if let Some(path) = out {
        write_field_csv(&path, &result.eigenfield)?;
        println!("wrote {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

struct CheckRow {
    name: &'static str,
    value: String,
    threshold: &'static str,
    status: &'static str,
    note: Option<String>,
}

impl CheckRow {
    fn pass(name: &'static str, value: f64, threshold: &'static str, ok: bool) -> Self {
        CheckRow {
            name,
            value: format!("{value:.3e}"),
            threshold,
            status: if ok { "pass" } else { "fail" },
            note: None,
        }
    }

    fn skip(name: &'static str, reason: String) -> Self {
        CheckRow {
            name,
            value: "-".to_string(),
            threshold: "",
            status: "skip",
            note: Some(reason),
        }
    }
}

fn cmd_validate(config: &Path) -> Result<ExitCode, Error> {
    let cfg = load_config(config)?;
    let ev = make_evolver(&cfg)?;
    let spec = ev.spec();
    let mut rows = Vec::new();

    let mass_gap = (spec.kernel.mass() - 1.0).abs();
    rows.push(CheckRow::pass(
        "kernel_mass",
        mass_gap,
        "<= 1e-12",
        mass_gap <= 1e-12,
    ));

    let sym_gap = spec
        .kernel
        .offsets
        .iter()
        .zip(&spec.kernel.weights)
        .map(|(o, w)| (spec.kernel.weight_at([-o[0], -o[1]]) - w).abs())
        .fold(0.0f64, f64::max);
    rows.push(CheckRow::pass(
        "kernel_symmetry",
        sym_gap,
        "== 0",
        sym_gap == 0.0,
    ));

    rows.push(CheckRow::pass(
        "kernel_center_positive",
        spec.kernel.j0,
        "> 0",
        spec.kernel.j0 > 0.0,
    ));

    let floor = spec.averaging.denominator_floor;
    let coverage = match spec.averaging.mode {
        AveragingMode::Perforated | AveragingMode::Density => {
            let ball = ball_stencil(&spec.grid, spec.averaging.delta)?;
            let weight = if spec.averaging.mode == AveragingMode::Perforated {
                &spec.chi_eps
            } else {
                &spec.density
            };
            let cover = convolve(&ball, weight, 0.0)?;
            min_on_support(&cover.values, ev.support())
        }
        AveragingMode::Local => min_on_support(&spec.density.values, ev.support()),
    };
    rows.push(CheckRow::pass(
        "coverage_margin",
        coverage - floor,
        ">= 0",
        coverage - floor >= 0.0,
    ));

    let (center, extent) = match cfg.domain.shape()? {
        DomainShape::Square { center, half_width } => (center, half_width),
        DomainShape::Disk { center, radius } => (center, radius),
    };
    let probe_field = AnalyticField::GaussianBump {
        center,
        sigma: 0.5 * extent,
        amplitude: 1.0,
    };
    let x = if spec.grid.dim == 2 {
        [center[0] + 0.25 * extent, center[1] + 0.1 * extent]
    } else {
        [center[0] + 0.25 * extent, 0.0]
    };
    let (_, _, rel) = appendix_gradient_check(&spec.grid, &probe_field, x, 0.5 * extent, 256)?;
    rows.push(CheckRow::pass(
        "gradient_identity",
        rel,
        "<= 1e-4",
        rel <= 1e-4,
    ));

    match rho_form_residual(&ev, &ev.initial_state()) {
        Ok(residual) => rows.push(CheckRow::pass(
            "form_identity",
            residual,
            "<= 1e-12",
            residual <= 1e-12,
        )),
        Err(e) => rows.push(CheckRow::skip("form_identity", e.to_string())),
    }

    println!(
        "{:<24} {:>14} {:>10} {:>8}",
        "check", "value", "threshold", "status"
    );
    let mut failures = 0usize;
    for row in &rows {
        let mut line = format!(
            "{:<24} {:>14} {:>10} {:>8}",
            row.name, row.value, row.threshold, row.status
        );
        if let Some(note) = &row.note {
            line.push_str(&format!("  ({note})"));
        }
        println!("{line}");
        if row.status == "fail" {
            failures += 1;
        }
    }
    if failures > 0 {
        println!("{failures} check(s) failed");
        return Ok(ExitCode::from(1));
    }
    println!("all checks passed");
    Ok(ExitCode::SUCCESS)
}

fn min_on_support(values: &[f64], support: &[bool]) -> f64 {
    values
        .iter()
        .zip(support)
        .filter(|(_, &s)| s)
        .map(|(v, _)| v.max(0.0))
        .fold(f64::INFINITY, f64::min)
}

fn cmd_report(input: &Path, out: &Path) -> Result<ExitCode, Error> {
    let report = load_report(input)?;
    std::fs::create_dir_all(out)?;
    let csv_path = out.join("report.csv");
    std::fs::write(&csv_path, render_csv(&report))?;
    let svg_name = match report.sweep_kind {
        SweepKind::Eps => "error_vs_eps.svg",
        SweepKind::Delta => "error_vs_delta.svg",
    };
    let svg_path = out.join(svg_name);
    std::fs::write(&svg_path, render_svg(&report))?;
    println!("wrote {}", csv_path.display());
    println!("wrote {}", svg_path.display());
    Ok(ExitCode::SUCCESS)
}
