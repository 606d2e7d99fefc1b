//! Self-contained SVG charts.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN: f64 = 64.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * MARGIN)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn header(out: &mut String, title: &str, x_label: &str, y_label: &str, f: &Frame, log_axes: bool) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>
<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>
"#,
        W / 2.0,
        escape(title),
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    );
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let (xv, yv) = (f.x0 + t * (f.x1 - f.x0), f.y0 + t * (f.y1 - f.y0));
        let (xs, ys) = if log_axes {
            (format!("{:.3e}", 10f64.powf(xv)), format!("{:.3e}", 10f64.powf(yv)))
        } else {
            (format!("{xv:.3}"), format!("{yv:.3}"))
        };
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{xs}</text><text x="{:.1}" y="{:.1}" text-anchor="end">{ys}</text>"#,
            f.px(xv),
            H - MARGIN + 16.0,
            MARGIN - 4.0,
            f.py(yv) + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text><text transform="translate(16 {}) rotate(-90)" text-anchor="middle">{}</text>"#,
        W / 2.0,
        H - 16.0,
        escape(x_label),
        H / 2.0,
        escape(y_label)
    );
}

fn polyline(out: &mut String, f: &Frame, points: &[(f64, f64)], color: &str, dash: bool) {
    let pts: Vec<String> = points
        .iter()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y)))
        .collect();
    let _ = writeln!(
        out,
        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{}/>"#,
        pts.join(" "),
        if dash { r#" stroke-dasharray="6 4""# } else { "" }
    );
}

fn legend(out: &mut String, labels: &[(&str, &str)]) {
    for (k, (label, color)) in labels.iter().enumerate() {
        let y = MARGIN + 16.0 + 16.0 * k as f64;
        let x = W - MARGIN - 150.0;
        let _ = writeln!(
            out,
            r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            x + 20.0,
            x + 26.0,
            y + 4.0,
            escape(label)
        );
    }
}

/// Line chart on linear axes.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (x0, x1) = span(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = span(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let f = Frame { x0, x1, y0, y1 };
    let mut out = String::new();
    header(&mut out, title, x_label, y_label, &f, false);
    let mut labels = Vec::new();
    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        polyline(&mut out, &f, &s.points, color, false);
        labels.push((s.label, color));
    }
    legend(&mut out, &labels);
    out.push_str("</svg>\n");
    out
}

/// Log-log predicted-versus-observed scatter with the 1:1 line and a
/// factor-of-two band.
pub fn band_scatter(title: &str, points: &[(f64, f64)]) -> String {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(o, p)| *o > 0.0 && *p > 0.0)
        .map(|(o, p)| (o.log10(), p.log10()))
        .collect();
    let (lo, hi) = span(logs.iter().flat_map(|&(a, b)| [a, b]));
    let pad = 0.1 * (hi - lo) + 0.35;
    let f = Frame {
        x0: lo - pad,
        x1: hi + pad,
        y0: lo - pad,
        y1: hi + pad,
    };
    let mut out = String::new();
    header(&mut out, title, "observed cycles", "predicted cycles", &f, true);
    let l2 = 2f64.log10();
    polyline(&mut out, &f, &[(f.x0, f.x0), (f.x1, f.x1)], "black", false);
    polyline(&mut out, &f, &[(f.x0, f.x0 + l2), (f.x1 - l2, f.x1)], "gray", true);
    polyline(&mut out, &f, &[(f.x0 + l2, f.x0), (f.x1, f.x1 - l2)], "gray", true);
    for &(x, y) in &logs {
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{}"/>"#,
            f.px(x),
            f.py(y),
            COLORS[0]
        );
    }
    legend(&mut out, &[("1:1", "black"), ("2x band", "gray")]);
    out.push_str("</svg>\n");
    out
}
