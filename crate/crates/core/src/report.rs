//! Human-readable outputs: AP grid CSVs, SVG heatmaps, polar angular
//! histograms, and a hashed manifest. All emitters are byte-deterministic.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::{AngularHistogram, ApGrid, EvalResults};
use crate::fsutil::write_atomic;

/// Heatmap ramp endpoints: AP 0 maps to `RAMP_LOW`, AP 1 to `RAMP_HIGH`.
pub const RAMP_LOW: [u8; 3] = [0xd7, 0x30, 0x27];
pub const RAMP_HIGH: [u8; 3] = [0x1a, 0x98, 0x50];
const NO_DATA: &str = "#cccccc";

pub fn ap_grid_csv(grid: &ApGrid) -> String {
    let mut out = String::from("altitude_m/radius_m");
    for r in &grid.radii_m {
        write!(out, ",{r}").unwrap();
    }
    out.push('\n');
    for (h, row) in grid.altitudes_m.iter().zip(&grid.cells) {
        write!(out, "{h}").unwrap();
        for cell in row {
            match cell {
                Some(ap) => write!(out, ",{ap:.4}").unwrap(),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    match grid.map_value {
        Some(m) => writeln!(out, "mAP,{m:.4}").unwrap(),
        None => out.push_str("mAP,\n"),
    }
    out
}

pub fn emit_ap_grid_csv(grid: &ApGrid, path: &Path) -> Result<()> {
    write_atomic(path, ap_grid_csv(grid).as_bytes())
}

/// Parses a grid CSV back. Cell values carry the 4-decimal quantization of the writer.
pub fn parse_ap_grid_csv(text: &str) -> Result<ApGrid> {
    let bad = |m: String| Error::InvalidArgument(format!("AP grid CSV: {m}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}")));
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() < 2 {
        return Err(bad("needs a header and a mAP line".into()));
    }
    let radii = lines[0].split(',').skip(1).map(num).collect::<Result<Vec<_>>>()?;
    let mut altitudes = Vec::new();
    let mut cells = Vec::new();
    for line in &lines[1..lines.len() - 1] {
        let mut fields = line.split(',');
        altitudes.push(num(fields.next().unwrap_or_default())?);
        let row = fields
            .map(|f| if f.is_empty() { Ok(None) } else { num(f).map(Some) })
            .collect::<Result<Vec<_>>>()?;
        if row.len() != radii.len() {
            return Err(bad(format!("row has {} cells, expected {}", row.len(), radii.len())));
        }
        cells.push(row);
    }
    if !lines[lines.len() - 1].starts_with("mAP,") {
        return Err(bad("missing trailing mAP line".into()));
    }
    Ok(ApGrid::new(None, altitudes, radii, cells))
}

fn ramp(ap: f64) -> String {
    let t = ap.clamp(0.0, 1.0);
    let c: Vec<u8> = RAMP_LOW
        .iter()
        .zip(RAMP_HIGH)
        .map(|(&lo, hi)| (f64::from(lo) + (f64::from(hi) - f64::from(lo)) * t).round() as u8)
        .collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Position of `v` along an axis whose values sit at evenly spaced centers.
fn axis_position(axis: &[f64], v: f64, start: f64, step: f64) -> f64 {
    let center = |i: usize| start + step * (i as f64 + 0.5);
    if axis.len() == 1 || v <= axis[0] {
        return if v < axis[0] { start } else { center(0) };
    }
    let last = axis.len() - 1;
    if v >= axis[last] {
        return if v > axis[last] { start + step * axis.len() as f64 } else { center(last) };
    }
    let k = axis.windows(2).position(|w| v >= w[0] && v <= w[1]).unwrap_or(0);
    let t = (v - axis[k]) / (axis[k + 1] - axis[k]);
    center(k) + t * step
}

/// Heatmap of a grid: radius left to right, altitude bottom to top. With
/// `splits = Some((h_split, r_split))` the region quadrant lines are drawn.
pub fn heatmap_svg(grid: &ApGrid, title: &str, splits: Option<(f64, f64)>) -> String {
    const CW: f64 = 56.0;
    const CH: f64 = 32.0;
    const LEFT: f64 = 80.0;
    const TOP: f64 = 48.0;
    let cols = grid.radii_m.len();
    let rows = grid.altitudes_m.len();
    let width = LEFT + CW * cols as f64 + 24.0;
    let height = TOP + CH * rows as f64 + 56.0;

    let mut s = String::new();
    writeln!(
        s,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"##
    )
    .unwrap();
    writeln!(s, r##"<rect class="background" x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>"##).unwrap();
    writeln!(s, r##"<text x="{LEFT}" y="20" font-size="14">{}</text>"##, xml_escape(title)).unwrap();
    // top row is the highest altitude
    for (i, (h, row)) in grid.altitudes_m.iter().zip(&grid.cells).enumerate() {
        let y = TOP + CH * (rows - 1 - i) as f64;
        writeln!(
            s,
            r##"<text class="tick" x="{:.1}" y="{:.1}" text-anchor="end">{h}</text>"##,
            LEFT - 6.0,
            y + CH * 0.5 + 4.0
        )
        .unwrap();
        for (j, cell) in row.iter().enumerate() {
            let x = LEFT + CW * j as f64;
            let (class, fill, label) = match cell {
                Some(ap) => ("cell", ramp(*ap), format!("{ap:.2}")),
                None => ("cell nodata", NO_DATA.to_string(), String::new()),
            };
            writeln!(
                s,
                r##"<rect class="{class}" x="{x:.1}" y="{y:.1}" width="{CW:.1}" height="{CH:.1}" fill="{fill}" stroke="#ffffff"/>"##
            )
            .unwrap();
            if !label.is_empty() {
                writeln!(
                    s,
                    r##"<text class="value" x="{:.1}" y="{:.1}" text-anchor="middle">{label}</text>"##,
                    x + CW * 0.5,
                    y + CH * 0.5 + 4.0
                )
                .unwrap();
            }
        }
    }
    let bottom = TOP + CH * rows as f64;
    for (j, r) in grid.radii_m.iter().enumerate() {
        writeln!(
            s,
            r##"<text class="tick" x="{:.1}" y="{:.1}" text-anchor="middle">{r}</text>"##,
            LEFT + CW * (j as f64 + 0.5),
            bottom + 16.0
        )
        .unwrap();
    }
    writeln!(
        s,
        r##"<text class="axis-label" x="{:.1}" y="{:.1}" text-anchor="middle">orbit radius (m)</text>"##,
        LEFT + CW * cols as f64 * 0.5,
        bottom + 36.0
    )
    .unwrap();
    writeln!(
        s,
        r##"<text class="axis-label" x="14" y="{:.1}" transform="rotate(-90 14 {:.1})" text-anchor="middle">altitude (m)</text>"##,
        TOP + CH * rows as f64 * 0.5,
        TOP + CH * rows as f64 * 0.5
    )
    .unwrap();
    if let Some((h_split, r_split)) = splits {
        let x = axis_position(&grid.radii_m, r_split, LEFT, CW);
        // altitude axis runs upward, so mirror the position
        let y_up = axis_position(&grid.altitudes_m, h_split, 0.0, CH);
        let y = bottom - y_up;
        writeln!(
            s,
            r##"<line class="split" x1="{x:.1}" y1="{TOP:.1}" x2="{x:.1}" y2="{bottom:.1}" stroke="#000000" stroke-dasharray="4 3"/>"##
        )
        .unwrap();
        writeln!(
            s,
            r##"<line class="split" x1="{LEFT:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#000000" stroke-dasharray="4 3"/>"##,
            LEFT + CW * cols as f64
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

pub fn emit_heatmap_svg(grid: &ApGrid, title: &str, splits: Option<(f64, f64)>, path: &Path) -> Result<()> {
    write_atomic(path, heatmap_svg(grid, title, splits).as_bytes())
}

/// Polar bar chart: one wedge per bin, radial length proportional to count,
/// azimuth 0 pointing right and increasing counterclockwise.
pub fn angular_svg(hist: &AngularHistogram, title: &str) -> String {
    const C: f64 = 200.0;
    const R_MAX: f64 = 160.0;
    let max = hist.counts.iter().copied().max().unwrap_or(0);
    let mut s = String::new();
    writeln!(
        s,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="400" height="430" viewBox="0 0 400 430" font-family="sans-serif" font-size="11">"##
    )
    .unwrap();
    writeln!(s, r##"<rect class="background" x="0" y="0" width="400" height="430" fill="#ffffff"/>"##).unwrap();
    writeln!(s, r##"<circle class="guide" cx="{C}" cy="{C}" r="{R_MAX}" fill="none" stroke="#bbbbbb"/>"##).unwrap();
    let point = |deg: f64, r: f64| {
        let a = deg.to_radians();
        (C + r * a.cos(), C - r * a.sin())
    };
    for (k, &count) in hist.counts.iter().enumerate() {
        let r = if max == 0 { 0.0 } else { R_MAX * count as f64 / max as f64 };
        let a0 = k as f64 * hist.bin_width_deg;
        let a1 = a0 + hist.bin_width_deg;
        let (x0, y0) = point(a0, r);
        let (xm, ym) = point(0.5 * (a0 + a1), r);
        let (x1, y1) = point(a1, r);
        // two half-arcs keep the path valid even for a single 360° bin
        writeln!(
            s,
            r##"<path class="wedge" data-bin="{k}" data-count="{count}" data-radius="{r:.3}" d="M {C:.3} {C:.3} L {x0:.3} {y0:.3} A {r:.3} {r:.3} 0 0 0 {xm:.3} {ym:.3} A {r:.3} {r:.3} 0 0 0 {x1:.3} {y1:.3} Z" fill="#3182bd" stroke="#ffffff" stroke-width="0.5"/>"##
        )
        .unwrap();
    }
    writeln!(s, r##"<text x="{C}" y="405" text-anchor="middle" font-size="13">{}</text>"##, xml_escape(title)).unwrap();
    writeln!(
        s,
        r##"<text class="scale" x="{C}" y="423" text-anchor="middle">max bin count {max}, bin width {}°</text>"##,
        hist.bin_width_deg
    )
    .unwrap();
    s.push_str("</svg>\n");
    s
}

pub fn emit_angular_svg(hist: &AngularHistogram, title: &str, path: &Path) -> Result<()> {
    write_atomic(path, angular_svg(hist, title).as_bytes())
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Path relative to the bundle directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportBundle {
    pub out_dir: PathBuf,
    pub files: Vec<ManifestEntry>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

impl ReportBundle {
    fn new(out_dir: &Path) -> Self {
        ReportBundle {
            out_dir: out_dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    fn add(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.out_dir.join(name), bytes)?;
        self.files.push(ManifestEntry {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    fn write_manifest(&self) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(&serde_json::json!({ "files": self.files })).expect("manifest serializes");
        bytes.push(b'\n');
        write_atomic(&self.out_dir.join(MANIFEST_NAME), &bytes)
    }
}

/// Writes the per-illumination CSV and heatmap set, angular plots, a mAP
/// summary, and `manifest.json` listing every other file with its hash.
pub fn emit_report(results: &EvalResults, out_dir: &Path) -> Result<ReportBundle> {
    let mut bundle = ReportBundle::new(out_dir);
    let splits = Some((results.h_split, results.r_split));
    for grid in &results.grids {
        let scope = grid.scope_name();
        bundle.add(&format!("ap_grid_{scope}.csv"), ap_grid_csv(grid).as_bytes())?;
        let title = format!("{} AP@{} ({scope})", results.trial, results.iou_threshold);
        bundle.add(&format!("heatmap_{scope}.svg"), heatmap_svg(grid, &title, splits).as_bytes())?;
    }
    for h in results
        .histograms
        .iter()
        .filter(|h| matches!(h.scope.as_str(), "all" | "nadir" | "outside_nadir"))
    {
        let title = format!("{} positive detections by azimuth ({})", results.trial, h.scope);
        bundle.add(&format!("angular_{}.svg", h.scope), angular_svg(&h.histogram, &title).as_bytes())?;
    }
    let mut summary = String::from("scope,mAP\n");
    for (scope, v) in &results.map_by_illumination {
        writeln!(summary, "{scope},{}", v.map(|m| format!("{m:.4}")).unwrap_or_default()).unwrap();
    }
    for (region, v) in &results.map_by_region {
        writeln!(summary, "region:{region},{}", v.map(|m| format!("{m:.4}")).unwrap_or_default()).unwrap();
    }
    bundle.add("summary.csv", summary.as_bytes())?;
    bundle.write_manifest()?;
    Ok(bundle)
}
