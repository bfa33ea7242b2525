//! Self-contained SVG output: colour-mapped cell fields and a convergence
//! chart.

use std::fmt::Write as _;
use std::path::Path;

use super::export::{read_fields_csv, FieldRow};
use super::{read_file, write_file, RunError};
use crate::cmaes::{read_log, GenerationRecord};

/// Piecewise-linear colour scale through a few anchor colours.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Colormap {
    Viridis,
    Inferno,
}

impl Colormap {
    fn anchors(self) -> &'static [[u8; 3]] {
        match self {
            Colormap::Viridis => &[
                [68, 1, 84],
                [59, 82, 139],
                [33, 145, 140],
                [94, 201, 98],
                [253, 231, 37],
            ],
            Colormap::Inferno => &[[0, 0, 4], [87, 16, 110], [188, 55, 84], [249, 142, 9], [252, 255, 164]],
        }
    }

    /// Colour for `s` in `[0, 1]` as `#rrggbb`.
    pub fn color(self, s: f64) -> String {
        let a = self.anchors();
        let s = if s.is_finite() { s.clamp(0.0, 1.0) } else { 0.0 };
        let pos = s * (a.len() - 1) as f64;
        let k = (pos.floor() as usize).min(a.len() - 2);
        let f = pos - k as f64;
        let c: Vec<u8> = (0..3)
            .map(|ch| (a[k][ch] as f64 + f * (a[k + 1][ch] as f64 - a[k][ch] as f64)).round() as u8)
            .collect();
        format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
    }
}

const CELL_PX: f64 = 5.0;
const MARGIN: f64 = 40.0;

/// Heatmap of a row-major `nx × ny` field with `j = 0` at the bottom.
/// `None` cells are drawn grey (solid, or outside the field's support).
pub fn heatmap_svg(title: &str, unit: &str, nx: usize, ny: usize, values: &[Option<f64>], cmap: Colormap) -> String {
    let finite = values.iter().flatten().copied().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let w = nx as f64 * CELL_PX;
    let h = ny as f64 * CELL_PX;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="12">"#,
        w + 2.0 * MARGIN + 60.0,
        h + 2.0 * MARGIN
    );
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="{}">{}</text>"#,
        MARGIN - 12.0,
        escape(title)
    );
    let _ = writeln!(s, r#"<g shape-rendering="crispEdges">"#);
    for j in 0..ny {
        for i in 0..nx {
            let fill = match values[j * nx + i] {
                Some(v) if v.is_finite() => cmap.color((v - lo) / span),
                _ => "#9e9e9e".to_string(),
            };
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{CELL_PX}" height="{CELL_PX}" fill="{fill}"/>"#,
                MARGIN + i as f64 * CELL_PX,
                MARGIN + (ny - 1 - j) as f64 * CELL_PX
            );
        }
    }
    let _ = writeln!(s, "</g>");
    let bar_x = MARGIN + w + 15.0;
    for k in 0..50 {
        let frac = k as f64 / 49.0;
        let _ = writeln!(
            s,
            r#"<rect x="{bar_x}" y="{:.2}" width="12" height="{:.2}" fill="{}"/>"#,
            MARGIN + (1.0 - frac) * (h - h / 50.0),
            h / 50.0 + 0.5,
            cmap.color(frac)
        );
    }
    if lo.is_finite() {
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, bar_x, MARGIN - 2.0, fmt_tick(hi));
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}">{}</text>"#,
            bar_x,
            MARGIN + h + 14.0,
            fmt_tick(lo)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}">{}</text>"#,
        bar_x,
        MARGIN + h + 28.0,
        escape(unit)
    );
    s.push_str("</svg>\n");
    s
}

/// Best-so-far and population-mean cost per generation on a log axis,
/// with an optional horizontal reference line.
pub fn convergence_svg(records: &[GenerationRecord], reference: Option<(f64, &str)>) -> String {
    let (w, h) = (560.0, 340.0);
    let (left, right, top, bottom) = (70.0, 20.0, 30.0, 45.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let mut ys: Vec<f64> = records
        .iter()
        .flat_map(|r| [r.best_j, r.mean_j])
        .filter(|v| v.is_finite() && *v > 0.0)
        .collect();
    if let Some((v, _)) = reference {
        if v > 0.0 {
            ys.push(v);
        }
    }
    let lo = ys
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
        .max(1e-12)
        .log10()
        .floor();
    let hi = ys
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
        .log10()
        .ceil()
        .max(lo + 1.0);
    let g_max = records.iter().map(|r| r.generation).max().unwrap_or(1).max(1) as f64;
    let px = |g: usize| left + pw * g as f64 / g_max;
    let py = |v: f64| top + ph * (1.0 - (v.max(1e-300).log10() - lo) / (hi - lo));
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let mut e = lo;
    while e <= hi + 0.5 {
        let y = py(10f64.powf(e));
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/>"##,
            left + pw
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="end">1e{}</text>"#,
            left - 6.0,
            y + 4.0,
            e as i64
        );
        e += 1.0;
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">generation</text>"#,
        left + pw / 2.0,
        h - 8.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
        left + pw,
        h - 28.0,
        g_max as usize
    );
    let _ = writeln!(s, r#"<text x="{left}" y="{}" >0</text>"#, h - 28.0);
    let _ = writeln!(s, r#"<text x="{left}" y="18">cost J [Pa]</text>"#);
    let mut line = |pick: fn(&GenerationRecord) -> f64, color: &str, dash: &str| {
        let pts: Vec<String> = records
            .iter()
            .filter(|r| pick(r).is_finite() && pick(r) > 0.0)
            .map(|r| format!("{:.2},{:.2}", px(r.generation), py(pick(r))))
            .collect();
        if !pts.is_empty() {
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5" stroke-dasharray="{dash}"/>"#,
                pts.join(" ")
            );
        }
    };
    line(|r| r.mean_j, "#999999", "4 3");
    line(|r| r.best_j, "#1f4e9c", "none");
    if let Some((v, label)) = reference {
        if v > 0.0 {
            let y = py(v);
            let _ = writeln!(
                s,
                r##"<line x1="{left}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#c0392b" stroke-dasharray="6 3"/>"##,
                left + pw
            );
            let _ = writeln!(
                s,
                r##"<text x="{}" y="{:.2}" fill="#c0392b">{}</text>"##,
                left + 6.0,
                y - 4.0,
                escape(label)
            );
        }
    }
    let _ = writeln!(
        s,
        r##"<text x="{}" y="18" fill="#1f4e9c">best</text>"##,
        left + pw - 90.0
    );
    let _ = writeln!(
        s,
        r##"<text x="{}" y="18" fill="#999999">mean</text>"##,
        left + pw - 45.0
    );
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-2) {
        format!("{v:.3e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Heatmaps of speed and base-plate temperature from a field CSV.
pub fn field_svgs(rows: &[FieldRow]) -> (String, String) {
    let nx = rows.iter().map(|r| r.i).max().map_or(0, |m| m + 1);
    let ny = rows.iter().map(|r| r.j).max().map_or(0, |m| m + 1);
    let mut speed = vec![None; nx * ny];
    let mut t_bp = vec![None; nx * ny];
    for r in rows {
        let k = r.j * nx + r.i;
        if r.solid == 0 {
            speed[k] = Some(r.speed);
        }
        t_bp[k] = r.t_bp;
    }
    (
        heatmap_svg("velocity magnitude", "m/s", nx, ny, &speed, Colormap::Viridis),
        heatmap_svg("base-plate temperature", "K", nx, ny, &t_bp, Colormap::Inferno),
    )
}

/// Regenerates every plot of an output directory from its CSV artifacts.
/// Returns the files written.
pub fn run_plot(dir: &Path) -> Result<Vec<std::path::PathBuf>, RunError> {
    let mut written = Vec::new();
    let log_path = dir.join("generations.csv");
    if log_path.exists() {
        let text = read_file(&log_path)?;
        let records =
            read_log(text.as_bytes()).map_err(|e| RunError::config(format!("{}: {e}", log_path.display())))?;
        let out = dir.join("convergence.svg");
        write_file(&out, convergence_svg(&records, None))?;
        written.push(out);
    }
    let fields_path = dir.join("fields.csv");
    if fields_path.exists() {
        let text = read_file(&fields_path)?;
        let rows = read_fields_csv(text.as_bytes())
            .map_err(|e| RunError::config(format!("{}: {e}", fields_path.display())))?;
        let (speed, t_bp) = field_svgs(&rows);
        for (name, body) in [("speed.svg", speed), ("T_bp.svg", t_bp)] {
            let out = dir.join(name);
            write_file(&out, body)?;
            written.push(out);
        }
    }
    if written.is_empty() {
        return Err(RunError::config(format!(
            "{}: neither generations.csv nor fields.csv found",
            dir.display()
        )));
    }
    Ok(written)
}
