//! Report and plot emission: version-stamped JSON, headered CSV, and
//! minimal hand-emitted SVG charts (axes, points, polylines).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::{json, Value};

pub type AnyError = Box<dyn std::error::Error>;

/// Wrap a report with the artifact version and the resolved configuration,
/// then write it with a trailing newline.
pub fn write_report(path: &Path, config: Value, report: Value) -> Result<(), AnyError> {
    let doc = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "report": report,
    });
    fs::write(path, format!("{}\n", serde_json::to_string_pretty(&doc)?))?;
    Ok(())
}

pub fn print_or_write(path: Option<&Path>, config: Value, report: Value) -> Result<(), AnyError> {
    match path {
        Some(p) => write_report(p, config, report),
        None => {
            let doc = json!({
                "version": env!("CARGO_PKG_VERSION"),
                "config": config,
                "report": report,
            });
            println!("{}", serde_json::to_string_pretty(&doc)?);
            Ok(())
        }
    }
}

pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<(), AnyError> {
    let mut out = String::with_capacity(rows.len() * 32 + header.len() + 2);
    out.push_str(header);
    out.push('\n');
    for row in rows {
        out.push_str(row);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub struct Series<'a> {
    pub points: &'a [(f64, f64)],
    pub polyline: bool,
    pub color: &'a str,
    pub label: &'a str,
}

/// Minimal scatter/line chart: light frame, axis ticks at the extremes,
/// one optional label per series.
pub fn write_svg(
    path: &Path,
    x_label: &str,
    y_label: &str,
    series: &[Series<'_>],
) -> Result<(), AnyError> {
    let (w, h, ml, mb, mt, mr) = (640.0, 420.0, 70.0, 50.0, 20.0, 20.0);
    let all: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .collect();
    if all.is_empty() {
        fs::write(path, "<svg xmlns=\"http://www.w3.org/2000/svg\"/>\n")?;
        return Ok(());
    }
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 - x0 < 1e-12 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let px = |x: f64| ml + (x - x0) / (x1 - x0) * (w - ml - mr);
    let py = |y: f64| (h - mb) - (y - y0) / (y1 - y0) * (h - mb - mt);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    let _ = writeln!(svg, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
    let _ = writeln!(
        svg,
        "<line x1=\"{ml}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>",
        h - mb,
        w - mr
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{0}\" stroke=\"black\"/>",
        h - mb
    );
    for (t, v) in [(0.0, x0), (1.0, x1)] {
        let x = ml + t * (w - ml - mr);
        let _ = writeln!(
            svg,
            "<text x=\"{x}\" y=\"{0}\" font-size=\"11\" text-anchor=\"middle\">{v:.4}</text>",
            h - mb + 16.0
        );
    }
    for (t, v) in [(0.0, y0), (1.0, y1)] {
        let y = (h - mb) - t * (h - mb - mt);
        let _ = writeln!(
            svg,
            "<text x=\"{0}\" y=\"{y}\" font-size=\"11\" text-anchor=\"end\">{v:.4}</text>",
            ml - 6.0
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{0}\" y=\"{1}\" font-size=\"13\" text-anchor=\"middle\">{x_label}</text>",
        (ml + w - mr) / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"16\" y=\"{0}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 {0})\">{y_label}</text>",
        (mt + h - mb) / 2.0
    );
    for (i, s) in series.iter().enumerate() {
        if s.polyline {
            let pts: Vec<String> = s
                .points
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            let _ = writeln!(
                svg,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>",
                pts.join(" "),
                s.color
            );
        } else {
            for &(x, y) in s.points {
                let _ = writeln!(
                    svg,
                    "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{}\"/>",
                    px(x),
                    py(y),
                    s.color
                );
            }
        }
        if !s.label.is_empty() {
            let _ = writeln!(
                svg,
                "<text x=\"{0}\" y=\"{1}\" font-size=\"12\" fill=\"{2}\">{3}</text>",
                w - mr - 150.0,
                mt + 16.0 * (i as f64 + 1.0),
                s.color,
                s.label
            );
        }
    }
    let _ = writeln!(svg, "</svg>");
    fs::write(path, svg)?;
    Ok(())
}
