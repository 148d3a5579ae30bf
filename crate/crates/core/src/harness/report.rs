//! Report assembly and rendering: JSON with full metrics and timings, a CSV
//! with one row per (sweep value, test function, sample time), and a static
//! log-log SVG of the error curves.
//!
//! The CSV is fully determined by the config and the arithmetic, so repeated
//! runs produce identical bytes; per-member timings are therefore reported
//! only in the JSON and the CSV carries an empty wall_ms field.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::BoundReport;
use crate::harness::config::{Config, SweepKind};
use crate::kernel::KernelFamily;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridMeta {
    pub dim: usize,
    pub n: [usize; 2],
    pub h: [f64; 2],
    pub points: usize,
    /// Bytes of one double-precision field on this grid.
    pub field_bytes: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelMeta {
    pub family: KernelFamily,
    pub support_radius: f64,
    pub stencil_points: [usize; 2],
    pub mass: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeakErrorEntry {
    pub test_function: String,
    pub sample_time: f64,
    pub weak_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct L2Entry {
    pub sample_time: f64,
    pub l2_distance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRecord {
    pub sweep_value: f64,
    pub equation: String,
    pub max_weak_error: f64,
    pub l2_at_final: f64,
    pub weak_errors: Vec<WeakErrorEntry>,
    pub l2_distances: Vec<L2Entry>,
    pub bound: BoundReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_form_residual: Option<f64>,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub sweep_kind: SweepKind,
    pub config_hash: String,
    pub config: Config,
    pub grid: GridMeta,
    pub kernel: KernelMeta,
    pub test_functions: Vec<String>,
    pub sample_times: Vec<f64>,
    pub limit_equation: String,
    pub limit_wall_ms: u64,
    pub records: Vec<SweepRecord>,
}

/// Renders the per-row CSV. Column order is part of the file contract; the
/// wall_ms field is intentionally left empty so the bytes depend only on the
/// config.
pub fn render_csv(report: &SweepReport) -> String {
    let mut out = String::from(
        "sweep_value,test_function,sample_time,weak_error,l2_distance,bound_margin,wall_ms\n",
    );
    for rec in &report.records {
        for entry in &rec.weak_errors {
            let l2 = rec
                .l2_distances
                .iter()
                .find(|d| d.sample_time == entry.sample_time)
                .map(|d| d.l2_distance)
                .unwrap_or(f64::NAN);
            out.push_str(&format!(
                "{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},\n",
                rec.sweep_value,
                entry.test_function,
                entry.sample_time,
                entry.weak_error,
                l2,
                rec.bound.worst_margin,
            ));
        }
    }
    out
}

struct Series<'a> {
    name: &'a str,
    color: &'a str,
    points: Vec<(f64, f64)>,
}

/// Renders the log-log error plot: max weak error and final L2 distance
/// against the swept scale.
pub fn render_svg(report: &SweepReport) -> String {
    let weak: Vec<(f64, f64)> = report
        .records
        .iter()
        .filter(|r| r.max_weak_error > 0.0)
        .map(|r| (r.sweep_value, r.max_weak_error))
        .collect();
    let l2: Vec<(f64, f64)> = report
        .records
        .iter()
        .filter(|r| r.l2_at_final > 0.0)
        .map(|r| (r.sweep_value, r.l2_at_final))
        .collect();
    let x_label = match report.sweep_kind {
        SweepKind::Eps => "period",
        SweepKind::Delta => "averaging radius",
    };
    let title = match report.sweep_kind {
        SweepKind::Eps => "error vs period",
        SweepKind::Delta => "error vs averaging radius",
    };
    log_log_plot(
        title,
        x_label,
        "error",
        &[
            Series {
                name: "max weak error",
                color: "#1f77b4",
                points: weak,
            },
            Series {
                name: "final L2 distance",
                color: "#ff7f0e",
                points: l2,
            },
        ],
    )
}

fn log_log_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const ML: f64 = 70.0;
    const MR: f64 = 20.0;
    const MT: f64 = 40.0;
    const MB: f64 = 55.0;

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for s in series {
        for &(x, y) in &s.points {
            xs.push(x.log10());
            ys.push(y.log10());
        }
    }
    let (x_min, x_max) = padded_range(&xs);
    let (y_min, y_max) = padded_range(&ys);
    let px = |lx: f64| ML + (lx - x_min) / (x_max - x_min) * (W - ML - MR);
    let py = |ly: f64| H - MB - (ly - y_min) / (y_max - y_min) * (H - MT - MB);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" \
         text-anchor=\"middle\">{title}</text>\n",
        0.5 * W
    ));

    for tick in integer_ticks(x_min, x_max) {
        let x = px(tick);
        svg.push_str(&format!(
            "<line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\" \
             stroke=\"#dddddd\"/>\n",
            MT,
            H - MB
        ));
        svg.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"middle\">1e{tick:.0}</text>\n",
            H - MB + 18.0
        ));
    }
    for tick in integer_ticks(y_min, y_max) {
        let y = py(tick);
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" \
             stroke=\"#dddddd\"/>\n",
            ML,
            W - MR
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"end\">1e{tick:.0}</text>\n",
            ML - 6.0,
            y + 4.0
        ));
    }
    svg.push_str(&format!(
        "<rect x=\"{ML}\" y=\"{MT}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" \
         stroke=\"black\"/>\n",
        W - ML - MR,
        H - MT - MB
    ));
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\">{x_label}</text>\n",
        0.5 * W,
        H - 12.0
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"13\" \
         text-anchor=\"middle\" transform=\"rotate(-90 18 {:.1})\">{y_label}</text>\n",
        0.5 * H,
        0.5 * H
    ));

    for (i, s) in series.iter().enumerate() {
        if s.points.is_empty() {
            continue;
        }
        let path: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x.log10()), py(y.log10())))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>\n",
            s.color,
            path.join(" ")
        ));
        for &(x, y) in &s.points {
            svg.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3.5\" fill=\"{}\"/>\n",
                px(x.log10()),
                py(y.log10()),
                s.color
            ));
        }
        let ly = MT + 16.0 + 18.0 * i as f64;
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{}\" \
             stroke-width=\"2\"/>\n",
            ML + 10.0,
            ML + 34.0,
            s.color
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            ML + 40.0,
            ly + 4.0,
            s.name
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn padded_range(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (-1.0, 1.0);
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if (max - min).abs() < 1e-9 {
        (min - 0.5, max + 0.5)
    } else {
        let pad = 0.08 * (max - min);
        (min - pad, max + pad)
    }
}

fn integer_ticks(min: f64, max: f64) -> Vec<f64> {
    let lo = min.ceil() as i64;
    let hi = max.floor() as i64;
    (lo..=hi).map(|t| t as f64).collect()
}

/// Writes report.json, report.csv, and the SVG error plot into `dir`,
/// creating it if needed. Returns the written paths.
pub fn write_report(report: &SweepReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let json_path = dir.join("report.json");
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    std::fs::write(&json_path, json)?;
    written.push(json_path);

    let csv_path = dir.join("report.csv");
    std::fs::write(&csv_path, render_csv(report))?;
    written.push(csv_path);

    let svg_name = match report.sweep_kind {
        SweepKind::Eps => "error_vs_eps.svg",
        SweepKind::Delta => "error_vs_delta.svg",
    };
    let svg_path = dir.join(svg_name);
    std::fs::write(&svg_path, render_svg(report))?;
    written.push(svg_path);

    Ok(written)
}

/// Reads a report back from its JSON form.
pub fn load_report(path: &Path) -> Result<SweepReport> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read report {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::example_config;

    fn tiny_report() -> SweepReport {
        let cfg = example_config();
        SweepReport {
            sweep_kind: SweepKind::Eps,
            config_hash: "00".repeat(32),
            config: cfg,
            grid: GridMeta {
                dim: 2,
                n: [64, 64],
                h: [1.0 / 64.0, 1.0 / 64.0],
                points: 4096,
                field_bytes: 32768,
            },
            kernel: KernelMeta {
                family: KernelFamily::Tent,
                support_radius: 0.12,
                stencil_points: [7, 7],
                mass: 1.0,
            },
            test_functions: vec!["one".to_string()],
            sample_times: vec![1.0],
            limit_equation: "limit_dirichlet".to_string(),
            limit_wall_ms: 5,
            records: vec![SweepRecord {
                sweep_value: 0.125,
                equation: "eps_dirichlet".to_string(),
                max_weak_error: 3.2e-3,
                l2_at_final: 5.0e-2,
                weak_errors: vec![WeakErrorEntry {
                    test_function: "one".to_string(),
                    sample_time: 1.0,
                    weak_error: 3.2e-3,
                }],
                l2_distances: vec![L2Entry {
                    sample_time: 1.0,
                    l2_distance: 5.0e-2,
                }],
                bound: BoundReport {
                    eta: 1.0,
                    lambda1: 0.1,
                    lambda1_fallback: false,
                    lipschitz_bound: 0.5,
                    checked: 11,
                    violations: 0,
                    worst_margin: 0.25,
                },
                rho_form_residual: None,
                wall_ms: 17,
            }],
        }
    }

    #[test]
    fn csv_has_contract_header_and_empty_wall_column() {
        let csv = render_csv(&tiny_report());
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "sweep_value,test_function,sample_time,weak_error,l2_distance,bound_margin,wall_ms"
        );
        let row = lines.next().unwrap();
        assert!(row.ends_with(','), "wall_ms field must be empty: {row}");
        assert_eq!(row.split(',').count(), 7);
        assert!(row.contains(",one,"));
    }

    #[test]
    fn csv_rendering_is_deterministic() {
        let report = tiny_report();
        assert_eq!(render_csv(&report), render_csv(&report));
    }

    #[test]
    fn svg_contains_axes_and_series() {
        let svg = render_svg(&tiny_report());
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("max weak error"));
        assert!(svg.contains("polyline"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn report_round_trips_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let report = tiny_report();
        let written = write_report(&report, dir.path()).unwrap();
        assert_eq!(written.len(), 3);
        let back = load_report(&dir.path().join("report.json")).unwrap();
        assert_eq!(back.config_hash, report.config_hash);
        assert_eq!(back.records.len(), 1);
        assert_eq!(back.records[0].wall_ms, 17);
    }
}
