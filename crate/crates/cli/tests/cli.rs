use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nlhom_core::evolution::{EquationKind, InitialPreset, Scheme};
use nlhom_core::geometry::PerforationSpec;
use nlhom_core::harness::config::{
    DomainSection, GridSection, KernelSection, OutputSection, ProblemSection, ShapeKind, SweepKind,
    SweepSection,
};
use nlhom_core::harness::Config;
use nlhom_core::kernel::KernelFamily;
use nlhom_core::nonlinearity::{AveragingMode, AveragingSpec, GSpec};

fn nlhom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlhom"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn interval_config() -> Config {
    Config {
        grid: GridSection {
            dim: 1,
            n: 64,
            bounds: vec![[0.0, 1.0]],
        },
        domain: DomainSection {
            shape: ShapeKind::Square,
            center: [0.5, 0.0],
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
            support_radius: 0.1,
        },
        g: GSpec::TanhScale { a: 0.8 },
        averaging: AveragingSpec {
            delta: 0.15,
            mode: AveragingMode::Perforated,
            denominator_floor: 1e-3,
        },
        problem: ProblemSection {
            equation: EquationKind::EpsDirichlet,
            u0: InitialPreset::GaussianBump {
                center: [0.5, 0.0],
                sigma: 0.1,
                amplitude: 1.0,
            },
            t_final: 0.2,
            dt: 0.01,
            scheme: Scheme::Etd1,
            sample_stride: 10,
            bound_eta: Some(1.0),
        },
        sweep: None,
        output: None,
    }
}

fn write_config(dir: &Path, cfg: &Config) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

#[test]
fn missing_config_exits_two_and_names_the_path() {
    let out = nlhom(&["validate", "--config", "/no/such/place/config.json"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("/no/such/place/config.json"),
        "stderr does not name the path: {stderr}"
    );
}

#[test]
fn unknown_flag_exits_two() {
    let out = nlhom(&["run", "--config", "x.json", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_prints_a_margin_table_on_a_clean_config() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &interval_config());
    let out = nlhom(&["validate", "--config", path.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "stdout: {stdout}");
    for check in [
        "kernel_mass",
        "kernel_symmetry",
        "coverage_margin",
        "gradient_identity",
    ] {
        assert!(stdout.contains(check), "missing check {check}: {stdout}");
    }
    assert!(stdout.contains("all checks passed"), "stdout: {stdout}");
}

#[test]
fn run_writes_the_trajectory_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = interval_config();
    cfg.output = Some(OutputSection {
        dir: None,
        snapshots: true,
        heatmap: true,
        pgm: true,
    });
    let path = write_config(dir.path(), &cfg);
    let traj_dir = dir.path().join("traj");
    let out = nlhom(&[
        "run",
        "--config",
        path.to_str().unwrap(),
        "--out",
        traj_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    for name in [
        "manifest.json",
        "state_0000.csv",
        "state_final.svg",
        "support.pgm",
    ] {
        assert!(traj_dir.join(name).exists(), "missing {name}");
    }
    let manifest = std::fs::read_to_string(traj_dir.join("manifest.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    assert!(parsed["norm_log"].as_array().unwrap().len() > 1);
}

#[test]
fn eigen_prints_the_smallest_eigenvalue_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &interval_config());
    let out = nlhom(&["eigen", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let parsed: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("stdout is a json document");
    assert!(parsed["lambda1"].as_f64().unwrap() > 0.0);
    assert!(parsed["residual"].as_f64().unwrap() <= 1e-7);
}

#[test]
fn sweep_eps_writes_identical_reports_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = interval_config();
    cfg.sweep = Some(SweepSection {
        kind: SweepKind::Eps,
        values: vec![0.125, 0.0625],
        sample_times: vec![0.1, 0.2],
        test_functions: None,
    });
    let path = write_config(dir.path(), &cfg);
    let out1 = dir.path().join("out1");
    let out2 = dir.path().join("out2");
    for out_dir in [&out1, &out2] {
        let out = nlhom(&[
            "sweep-eps",
            "--config",
            path.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        for name in ["report.json", "report.csv", "error_vs_eps.svg"] {
            assert!(out_dir.join(name).exists(), "missing {name}");
        }
    }
    let csv1 = std::fs::read(out1.join("report.csv")).unwrap();
    let csv2 = std::fs::read(out2.join("report.csv")).unwrap();
    assert_eq!(csv1, csv2, "csv bytes differ between identical runs");

    let rerender = dir.path().join("rerender");
    let out = nlhom(&[
        "report",
        "--input",
        out1.join("report.json").to_str().unwrap(),
        "--out",
        rerender.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let csv3 = std::fs::read(rerender.join("report.csv")).unwrap();
    assert_eq!(csv1, csv3, "re-rendered csv differs from the original");
}
