//! Small SVG line and scatter charts.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 50.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

pub fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit<'a>(points: impl Iterator<Item = &'a (f64, f64)>) -> Self {
        let mut f = Frame { x0: f64::INFINITY, x1: f64::NEG_INFINITY, y0: f64::INFINITY, y1: f64::NEG_INFINITY };
        for &(x, y) in points.filter(|p| p.0.is_finite() && p.1.is_finite()) {
            f.x0 = f.x0.min(x);
            f.x1 = f.x1.max(x);
            f.y0 = f.y0.min(y);
            f.y1 = f.y1.max(y);
        }
        if !f.x0.is_finite() {
            (f.x0, f.x1, f.y0, f.y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if f.x1 - f.x0 < 1e-12 {
            f.x1 = f.x0 + 1.0;
        }
        if f.y1 - f.y0 < 1e-12 {
            f.y1 = f.y0 + 1.0;
        }
        f
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * MARGIN)
    }
}

fn header(out: &mut String, title: &str, f: &Frame, xlabel: &str, ylabel: &str) {
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let (l, r, t, b) = (MARGIN, W - MARGIN, MARGIN, H - MARGIN);
    let _ = writeln!(out, r#"<path d="M{l} {t} L{l} {b} L{r} {b}" stroke="black" fill="none"/>"#);
    for (v, x) in [(f.x0, l), (f.x1, r)] {
        let _ = writeln!(out, r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#, b + 16.0, tick(v));
    }
    for (v, y) in [(f.y0, b), (f.y1, t)] {
        let _ = writeln!(out, r#"<text x="{}" y="{y}" text-anchor="end">{}</text>"#, l - 4.0, tick(v));
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, escape(xlabel));
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    );
}

fn tick(v: f64) -> String {
    if v.abs() >= 1000.0 || (v != 0.0 && v.abs() < 0.01) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn legend(out: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = MARGIN + 14.0 * i as f64;
        let _ = writeln!(out, r#"<rect class="legend" x="{}" y="{}" width="10" height="10" fill="{}"/>"#, W - MARGIN - 110.0, y - 9.0, color(i));
        let _ = writeln!(out, r#"<text x="{}" y="{y}">{}</text>"#, W - MARGIN - 95.0, escape(name));
    }
}

/// One polyline per series; non-finite points are skipped.
pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, series: &[(&str, Vec<(f64, f64)>)]) -> String {
    let f = Frame::fit(series.iter().flat_map(|(_, s)| s.iter()));
    let mut out = String::new();
    header(&mut out, title, &f, xlabel, ylabel);
    for (i, (_, pts)) in series.iter().enumerate() {
        let d: Vec<String> = pts
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y)))
            .collect();
        if !d.is_empty() {
            let _ = writeln!(out, r#"<polyline points="{}" stroke="{}" fill="none" stroke-width="2"/>"#, d.join(" "), color(i));
        }
    }
    legend(&mut out, &series.iter().map(|s| s.0).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

/// Points coloured by group index into `groups`.
pub fn scatter_chart(title: &str, points: &[(f64, f64)], group: &[usize], groups: &[&str]) -> String {
    let f = Frame::fit(points.iter());
    let mut out = String::new();
    header(&mut out, title, &f, "x", "y");
    for (&(x, y), &g) in points.iter().zip(group) {
        let _ = writeln!(out, r#"<circle class="point" cx="{:.2}" cy="{:.2}" r="3" fill="{}" fill-opacity="0.75"/>"#, f.px(x), f.py(y), color(g));
    }
    legend(&mut out, groups);
    out.push_str("</svg>\n");
    out
}
