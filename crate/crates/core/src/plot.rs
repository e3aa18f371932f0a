//! Small deterministic SVG charts for experiment artifacts.
//!
//! Output depends only on the input data: fixed viewport, fixed number
//! formatting and no timestamps, so two identical runs produce identical
//! files.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotKind {
    /// Polyline with a marker at each point.
    Line,
    /// Grouped bars, one group per distinct x.
    Bars,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Figure {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn fmt_num(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e5).contains(&a) {
        format!("{v:.2e}")
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else {
        let s = format!("{v:.3}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        if s == "-0" {
            "0".into()
        } else {
            s.into()
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(values: impl Iterator<Item = f64>, pad_zero: bool) -> (f64, f64) {
    let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if pad_zero {
        lo = lo.min(0.0);
    }
    if hi - lo < 1e-12 * (1.0 + hi.abs()) {
        lo -= 0.5;
        hi += 0.5;
    }
    (lo, hi)
}

/// Renders the figure as an SVG document.
pub fn render_svg(fig: &Figure, kind: PlotKind) -> Result<String> {
    if fig.series.is_empty() || fig.series.iter().all(|s| s.points.is_empty()) {
        return Err(Error::InvalidParameter("nothing to plot: no series points".into()));
    }
    let pts = || fig.series.iter().flat_map(|s| s.points.iter());
    if pts().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::NonFinite("plot data".into()));
    }
    let (x0, x1) = range(pts().map(|p| p.0), false);
    let (y0, y1) = range(pts().map(|p| p.1), kind == PlotKind::Bars);
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);

    let mut xs: Vec<f64> = pts().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    // Bars sit on evenly spaced slots; lines use a linear x axis.
    let sx = |x: f64| match kind {
        PlotKind::Line => LEFT + (x - x0) / (x1 - x0) * pw,
        PlotKind::Bars => {
            let i = xs.iter().position(|&v| v == x).unwrap_or(0) as f64;
            LEFT + (i + 0.5) / xs.len() as f64 * pw
        }
    };
    let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + pw / 2.0,
        escape(&fig.title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );

    for k in 0..=4 {
        let y = y0 + (y1 - y0) * k as f64 / 4.0;
        let py = sy(y);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            py + 4.0,
            fmt_num(y)
        );
    }
    let ticks: Vec<f64> = match kind {
        PlotKind::Bars => xs.clone(),
        PlotKind::Line if xs.len() <= 8 => xs.clone(),
        PlotKind::Line => (0..=4).map(|k| x0 + (x1 - x0) * k as f64 / 4.0).collect(),
    };
    for x in ticks {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            sx(x),
            TOP + ph + 18.0,
            fmt_num(x)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 14.0,
        escape(&fig.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&fig.y_label)
    );

    let n = fig.series.len() as f64;
    let slot = pw / xs.len() as f64;
    let bar_w = 0.8 * slot / n;
    for (i, ser) in fig.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        match kind {
            PlotKind::Line => {
                let path: Vec<String> = ser
                    .points
                    .iter()
                    .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                    .collect();
                if path.len() > 1 {
                    let _ = writeln!(
                        s,
                        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                        path.join(" ")
                    );
                }
                for &(x, y) in &ser.points {
                    let _ = writeln!(
                        s,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                        sx(x),
                        sy(y)
                    );
                }
            }
            PlotKind::Bars => {
                let base = sy(y0.max(0.0).min(y1));
                for &(x, y) in &ser.points {
                    let left = sx(x) - 0.4 * slot + i as f64 * bar_w;
                    let top = sy(y).min(base);
                    let _ = writeln!(
                        s,
                        r#"<rect x="{left:.2}" y="{top:.2}" width="{bar_w:.2}" height="{:.2}" fill="{color}"/>"#,
                        (sy(y) - base).abs()
                    );
                }
            }
        }
        let ly = TOP + 14.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<rect x="{lx}" y="{:.2}" width="12" height="12" fill="{color}"/><text x="{}" y="{ly:.2}">{}</text>"#,
            ly - 10.0,
            lx + 18.0,
            escape(&ser.label)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_plot(fig: &Figure, kind: PlotKind, path: &Path) -> Result<()> {
    std::fs::write(path, render_svg(fig, kind)?)?;
    Ok(())
}
