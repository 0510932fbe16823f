//! Sweep curves as CSV and as an SVG accuracy-vs-length plot.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::{EvalResult, OPERATING_LENGTH_S};

pub const CSV_HEADER: &str = "length_s,fold,accuracy,mean_accuracy,p_value";

/// One row per (length, fold).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub length_s: f64,
    pub fold: usize,
    pub accuracy: f64,
    pub mean_accuracy: f64,
    pub p_value: f64,
}

pub fn curve_rows(results: &[EvalResult]) -> Vec<CurveRow> {
    results
        .iter()
        .flat_map(|r| {
            r.fold_accuracies.iter().enumerate().map(move |(fold, &accuracy)| CurveRow {
                length_s: r.config.length_s,
                fold,
                accuracy,
                mean_accuracy: r.mean_accuracy,
                p_value: r.p_value,
            })
        })
        .collect()
}

pub fn curve_csv(rows: &[CurveRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{:.3},{},{:.6},{:.6},{:.6}",
            r.length_s, r.fold, r.accuracy, r.mean_accuracy, r.p_value
        );
    }
    out
}

pub fn write_curve_csv(path: &Path, results: &[EvalResult]) -> Result<()> {
    fs::write(path, curve_csv(&curve_rows(results))).map_err(|e| Error::io(path, e))
}

pub fn parse_curve_csv(text: &str) -> Result<Vec<CurveRow>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(CSV_HEADER) {
        return Err(Error::invalid(format!("curve file must start with `{CSV_HEADER}`")));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let bad = || Error::invalid(format!("curve line {}: cannot parse `{line}`", i + 2));
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 5 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            Ok(CurveRow {
                length_s: num(f[0])?,
                fold: f[1].parse().map_err(|_| bad())?,
                accuracy: num(f[2])?,
                mean_accuracy: num(f[3])?,
                p_value: num(f[4])?,
            })
        })
        .collect()
}

pub fn read_curve_csv(path: &Path) -> Result<Vec<CurveRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_curve_csv(&text)
}

/// `(length_s, mean_accuracy)` in file order, one point per length.
pub fn mean_curve(rows: &[CurveRow]) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    for r in rows {
        if out.last().map(|&(l, _)| l) != Some(r.length_s) {
            out.push((r.length_s, r.mean_accuracy));
        }
    }
    out
}

const COLOURS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Accuracy against response length, one line per named series, with
/// per-fold accuracies as small markers, chance level and the 0.3 s
/// operating point marked.
pub fn curve_svg(series: &[(String, Vec<CurveRow>)]) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 20.0, 30.0, 60.0);
    let (x0, x1) = (0.0, 1.0);
    let (y0, y1) = (0.4, 1.0);
    let px = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let py = |y: f64| top + (y1 - y.clamp(y0, y1)) / (y1 - y0) * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);

    for i in 0..=6 {
        let y = y0 + i as f64 * 0.1;
        let _ = writeln!(
            s,
            r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{y:.1}</text>"##,
            px(x0),
            py(y),
            px(x1),
            py(y),
            px(x0) - 6.0,
            py(y) + 4.0
        );
    }
    for i in 1..=9 {
        let x = i as f64 * 0.1;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{x:.1}</text>"#,
            px(x),
            h - bottom + 18.0
        );
    }
    let _ = writeln!(
        s,
        r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#888" stroke-dasharray="6 4"/>"##,
        px(x0),
        py(0.5),
        px(x1),
        py(0.5)
    );
    let _ = writeln!(
        s,
        r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#bbb" stroke-dasharray="2 3"/>"##,
        px(OPERATING_LENGTH_S),
        py(y0),
        px(OPERATING_LENGTH_S),
        py(y1)
    );
    let _ = writeln!(
        s,
        r##"<rect x="{left}" y="{top}" width="{:.1}" height="{:.1}" fill="none" stroke="#333"/>"##,
        w - left - right,
        h - top - bottom
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">transient response length (s)</text>"#,
        (left + w - right) / 2.0,
        h - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">accuracy</text>"#,
        (top + h - bottom) / 2.0,
        (top + h - bottom) / 2.0
    );

    for (k, (name, rows)) in series.iter().enumerate() {
        let colour = COLOURS[k % COLOURS.len()];
        for r in rows {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.1}" cy="{:.1}" r="2" fill="{colour}" fill-opacity="0.35"/>"#,
                px(r.length_s),
                py(r.accuracy)
            );
        }
        let points: Vec<String> = mean_curve(rows)
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#,
            points.join(" ")
        );
        let ly = top + 16.0 + 16.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{colour}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            w - right - 120.0,
            w - right - 100.0,
            w - right - 94.0,
            ly + 4.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn write_curve_svg(path: &Path, series: &[(String, Vec<CurveRow>)]) -> Result<()> {
    fs::write(path, curve_svg(series)).map_err(|e| Error::io(path, e))
}
