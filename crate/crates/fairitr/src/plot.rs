//! Two-panel SVG of disparate impact and value against α.

use std::fmt::Write;

use crate::harness::{CurveRecord, Summary};

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 380.0;
const PANEL: f64 = 360.0;
const MARGIN: f64 = 60.0;

struct Series<'a> {
    label: &'a str,
    color: &'a str,
    dashed: bool,
    points: Vec<(f64, f64)>,
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
    (lo - pad, hi + pad)
}

fn panel(out: &mut String, x0: f64, title: &str, series: &[Series<'_>]) {
    let (xlo, xhi) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (ylo, yhi) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let top = 40.0;
    let h = HEIGHT - top - MARGIN;
    let sx = |x: f64| x0 + (x - xlo) / (xhi - xlo) * PANEL;
    let sy = |y: f64| top + h - (y - ylo) / (yhi - ylo) * h;
    let _ = writeln!(
        out,
        r#"<rect x="{x0:.1}" y="{top:.1}" width="{PANEL:.1}" height="{h:.1}" fill="none" stroke="black"/>"#
    );
    let _ =
        writeln!(out, r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{title}</text>"#, x0 + PANEL / 2.0);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="13">alpha</text>"#,
        x0 + PANEL / 2.0,
        HEIGHT - 18.0
    );
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let (xv, yv) = (xlo + t * (xhi - xlo), ylo + t * (yhi - ylo));
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11">{xv:.2}</text>"#,
            sx(xv),
            top + h + 16.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="11">{yv:.3}</text>"#,
            x0 - 6.0,
            sy(yv) + 4.0
        );
    }
    for (i, s) in series.iter().enumerate() {
        let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let dash = if s.dashed { r#" stroke-dasharray="6,4""# } else { "" };
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"{dash}/>"#,
            pts.join(" "),
            s.color
        );
        let ly = top + 16.0 + 16.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{}" stroke-width="2"{dash}/>"#,
            x0 + PANEL - 110.0,
            x0 + PANEL - 85.0,
            s.color
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="12">{}</text>"#,
            x0 + PANEL - 80.0,
            ly + 4.0,
            s.label
        );
    }
}

fn series(records: &[CurveRecord], pick: impl Fn(&CurveRecord) -> [Summary; 3]) -> Vec<Series<'static>> {
    let spec = [("base", "#1f77b4", true), ("fair", "#2ca02c", true), ("trade-off", "#d62728", false)];
    spec.iter()
        .enumerate()
        .map(|(k, &(label, color, dashed))| Series {
            label,
            color,
            dashed,
            points: records.iter().map(|r| (r.alpha, pick(r)[k].mean)).collect(),
        })
        .collect()
}

/// Renders DI (left) and value (right) of the base, fair and trade-off rules.
pub fn curves_svg(records: &[CurveRecord]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    panel(&mut out, MARGIN, "Disparate impact", &series(records, |r| [r.base_di, r.fair_di, r.tradeoff_di]));
    panel(
        &mut out,
        MARGIN * 2.0 + PANEL + 40.0,
        "Value",
        &series(records, |r| [r.base_value, r.fair_value, r.tradeoff_value]),
    );
    out.push_str("</svg>\n");
    out
}
