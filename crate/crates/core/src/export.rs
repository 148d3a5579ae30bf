//! File exports: field snapshots, mask images, kernel profiles, trajectory
//! manifests, and field heatmaps.
//!
//! All text artifacts format floats with full precision so files are
//! reproducible bit for bit from the same data.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::evolution::Trajectory;
use crate::field::MaskedField;
use crate::kernel::KernelStencil;

/// Writes a field as CSV: a `# grid nx ny hx hy` comment header, then the
/// values row-major, one grid row per line.
pub fn write_field_csv(path: &Path, field: &MaskedField) -> Result<()> {
    let g = &field.grid;
    let mut out = format!(
        "# grid {} {} {:.16e} {:.16e}\n",
        g.n[0], g.n[1], g.h[0], g.h[1]
    );
    for i0 in 0..g.n[0] {
        let row: Vec<String> = (0..g.n[1])
            .map(|i1| format!("{:.16e}", field.values[g.idx(i0, i1)]))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Writes a mask as CSV: a header row with the axis sizes, then 0/1 values
/// row-major.
pub fn write_mask_csv(path: &Path, field: &MaskedField) -> Result<()> {
    let g = &field.grid;
    let mut out = format!("{},{}\n", g.n[0], g.n[1]);
    for i0 in 0..g.n[0] {
        let row: Vec<&str> = (0..g.n[1])
            .map(|i1| if field.mask[g.idx(i0, i1)] { "1" } else { "0" })
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Writes a mask as a plain-text PGM image: material cells white (255),
/// holes and exterior black (0). Rows follow the first grid axis.
pub fn write_mask_pgm(path: &Path, field: &MaskedField) -> Result<()> {
    let g = &field.grid;
    let mut out = format!("P2\n{} {}\n255\n", g.n[1], g.n[0]);
    for i0 in 0..g.n[0] {
        let row: Vec<&str> = (0..g.n[1])
            .map(|i1| {
                if field.mask[g.idx(i0, i1)] {
                    "255"
                } else {
                    "0"
                }
            })
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Writes the kernel stencil as CSV rows of `offset0,offset1,weight`.
pub fn write_kernel_csv(path: &Path, kernel: &KernelStencil) -> Result<()> {
    let mut out = String::from("offset0,offset1,weight\n");
    for (offset, weight) in kernel.offsets.iter().zip(&kernel.weights) {
        out.push_str(&format!("{},{},{:.16e}\n", offset[0], offset[1], weight));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryManifest {
    pub config_hash: String,
    pub dt: f64,
    /// Times of the exported snapshots, in file order.
    pub times: Vec<f64>,
    pub snapshot_files: Vec<String>,
    /// L2 norm after every step, starting with the initial state.
    pub norm_log: Vec<f64>,
}

/// Writes one CSV snapshot per sampled state plus a manifest tying files to
/// times and norms. Returns all written paths, manifest first.
pub fn write_trajectory(
    dir: &Path,
    traj: &Trajectory,
    config_hash: &str,
    snapshots: bool,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut files = Vec::new();
    if snapshots {
        for (i, state) in traj.states.iter().enumerate() {
            let name = format!("state_{i:04}.csv");
            let path = dir.join(&name);
            write_field_csv(&path, state)?;
            files.push(name);
            written.push(path);
        }
    }
    let manifest = TrajectoryManifest {
        config_hash: config_hash.to_string(),
        dt: traj.dt,
        times: traj.times.clone(),
        snapshot_files: files,
        norm_log: traj.norm_log.clone(),
    };
    let path = dir.join("manifest.json");
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    std::fs::write(&path, json)?;
    written.insert(0, path);
    Ok(written)
}

/// Renders a field as a static SVG heatmap on a symmetric blue-white-red
/// scale; masked-out cells are grey. Large grids are strided down so the
/// image stays near 256 cells per axis.
pub fn render_heatmap_svg(field: &MaskedField) -> String {
    let g = &field.grid;
    let stride = [g.n[0].div_ceil(256), g.n[1].div_ceil(256)];
    let rows = g.n[0].div_ceil(stride[0]);
    let cols = g.n[1].div_ceil(stride[1]);
    let cell = (640.0 / cols.max(rows) as f64).max(1.0);
    let w = cell * cols as f64;
    let h = cell * rows as f64;

    let amp = field
        .values
        .iter()
        .zip(&field.mask)
        .filter(|(_, &m)| m)
        .map(|(v, _)| v.abs())
        .fold(0.0f64, f64::max)
        .max(1e-300);

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" \
         viewBox=\"0 0 {w:.0} {h:.0}\">\n"
    );
    for r in 0..rows {
        for c in 0..cols {
            let i0 = r * stride[0];
            let i1 = c * stride[1];
            let k = g.idx(i0, i1);
            let fill = if field.mask[k] {
                let s = (field.values[k] / amp).clamp(-1.0, 1.0);
                if s >= 0.0 {
                    let t = (255.0 * (1.0 - s)) as u8;
                    format!("rgb(255,{t},{t})")
                } else {
                    let t = (255.0 * (1.0 + s)) as u8;
                    format!("rgb({t},{t},255)")
                }
            } else {
                "rgb(190,190,190)".to_string()
            };
            svg.push_str(&format!(
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{cell:.1}\" height=\"{cell:.1}\" \
                 fill=\"{fill}\"/>\n",
                c as f64 * cell,
                r as f64 * cell
            ));
        }
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    fn sample_field() -> MaskedField {
        let grid = build_grid(2, 4, &[[0.0, 1.0], [0.0, 1.0]]).unwrap();
        let mask: Vec<bool> = (0..16).map(|k| k != 5).collect();
        let values: Vec<f64> = (0..16).map(|k| k as f64 / 8.0 - 1.0).collect();
        MaskedField::from_values(&grid, values, mask).unwrap()
    }

    #[test]
    fn field_csv_has_grid_header_and_all_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.csv");
        write_field_csv(&path, &sample_field()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# grid 4 4 "));
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[1].split(',').count(), 4);
        // masked cell written as exact zero
        assert!(lines[2].starts_with("-5.0000000000000000e-1,0.0000000000000000e0"));
    }

    #[test]
    fn mask_exports_agree_with_the_mask() {
        let dir = tempfile::tempdir().unwrap();
        let field = sample_field();
        let csv_path = dir.path().join("mask.csv");
        let pgm_path = dir.path().join("mask.pgm");
        write_mask_csv(&csv_path, &field).unwrap();
        write_mask_pgm(&pgm_path, &field).unwrap();
        let csv = std::fs::read_to_string(&csv_path).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "4,4");
        assert_eq!(lines[1], "1,1,1,1");
        assert_eq!(lines[2], "1,0,1,1");
        let pgm = std::fs::read_to_string(&pgm_path).unwrap();
        let lines: Vec<&str> = pgm.lines().collect();
        assert_eq!(&lines[..3], ["P2", "4 4", "255"]);
        assert_eq!(lines[4], "255 0 255 255");
    }

    #[test]
    fn trajectory_manifest_lists_snapshots() {
        let dir = tempfile::tempdir().unwrap();
        let field = sample_field();
        let traj = Trajectory {
            times: vec![0.0, 0.5],
            states: vec![field.clone(), field],
            norm_log: vec![1.0, 0.9, 0.8],
            dt: 0.25,
        };
        let written = write_trajectory(dir.path(), &traj, "abc123", true).unwrap();
        assert_eq!(written.len(), 3);
        let manifest: TrajectoryManifest = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("manifest.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(
            manifest.snapshot_files,
            ["state_0000.csv", "state_0001.csv"]
        );
        assert_eq!(manifest.times, [0.0, 0.5]);
        assert_eq!(manifest.config_hash, "abc123");
    }

    #[test]
    fn heatmap_marks_masked_cells() {
        let svg = render_heatmap_svg(&sample_field());
        assert!(svg.contains("rgb(190,190,190)"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
