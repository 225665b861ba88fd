//! Minimal SVG line charts of batch-mean loss against `t`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{batch_mean_curve, read_trace_csv, StepTrace};
use crate::error::{LabError, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_L: f64 = 60.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 20.0;
const MARGIN_B: f64 = 45.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    OnLoss,
    OffLoss,
}

impl LossKind {
    fn pick(self, s: &StepTrace) -> f64 {
        match self {
            LossKind::OnLoss => s.on_loss,
            LossKind::OffLoss => s.off_loss,
        }
    }

    fn label(self) -> &'static str {
        match self {
            LossKind::OnLoss => "on-sampling loss",
            LossKind::OffLoss => "off-sampling loss",
        }
    }
}

/// One series: legend name and `(t, value)` points.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(usize, f64)>,
}

fn legend_name(path: &Path) -> String {
    let s = path.to_string_lossy();
    s.strip_suffix(".csv").unwrap_or(&s).to_string()
}

/// Reads trace CSVs and renders one batch-mean series per file.
pub fn emit_plots(paths: &[&Path], kind: LossKind) -> Result<String> {
    if paths.is_empty() {
        return Err(LabError::Invalid("plot needs at least one trace file".into()));
    }
    let mut series = Vec::with_capacity(paths.len());
    for p in paths {
        let name = p.display().to_string();
        let text = std::fs::read_to_string(p).map_err(|e| LabError::io(name.clone(), e))?;
        let traces = read_trace_csv(&name, &text)?;
        series.push(Series {
            name: legend_name(p),
            points: batch_mean_curve(&traces, |s| kind.pick(s)),
        });
    }
    render_svg(&series, kind.label())
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders series with `t` decreasing left to right, matching the sampling
/// direction.
pub fn render_svg(series: &[Series], y_label: &str) -> Result<String> {
    let all = series.iter().flat_map(|s| s.points.iter());
    let t_max = all.clone().map(|p| p.0).max().ok_or_else(|| LabError::Invalid("no points to plot".into()))?;
    let t_min = all.clone().map(|p| p.0).min().unwrap_or(0);
    let mut y_min = all.clone().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let mut y_max = all.map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if !(y_min.is_finite() && y_max.is_finite()) {
        return Err(LabError::Numeric("non-finite value in plot data".into()));
    }
    if y_max - y_min < 1e-12 {
        y_min -= 0.5;
        y_max += 0.5;
    }
    let t_span = (t_max - t_min).max(1) as f64;
    let pw = WIDTH - MARGIN_L - MARGIN_R;
    let ph = HEIGHT - MARGIN_T - MARGIN_B;
    let px = |t: usize| MARGIN_L + (t_max - t) as f64 / t_span * pw;
    let py = |y: f64| MARGIN_T + (y_max - y) / (y_max - y_min) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (x0, x1, y0, y1) = (MARGIN_L, MARGIN_L + pw, MARGIN_T, MARGIN_T + ph);
    let _ = writeln!(
        s,
        r#"<path d="M{x0:.2} {y0:.2} L{x0:.2} {y1:.2} L{x1:.2} {y1:.2}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let tv = t_max as f64 - f * t_span;
        let yv = y_min + f * (y_max - y_min);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{:.0}</text>"#,
            x0 + f * pw,
            y1 + 16.0,
            tv
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{:.3}</text>"#,
            x0 - 6.0,
            py(yv) + 4.0,
            yv
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-size="13" text-anchor="middle">t</text>"#,
        x0 + pw / 2.0,
        HEIGHT - 8.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.2}" font-size="13" text-anchor="middle" transform="rotate(-90 14 {:.2})">{}</text>"#,
        y0 + ph / 2.0,
        y0 + ph / 2.0,
        esc(y_label)
    );
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = ser.points.iter().map(|&(t, y)| format!("{:.2},{:.2}", px(t), py(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = y0 + 14.0 + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            x1 + 10.0,
            x1 + 30.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="11">{}</text>"#,
            x1 + 36.0,
            ly + 4.0,
            esc(&ser.name)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}
