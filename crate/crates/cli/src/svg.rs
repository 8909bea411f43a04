//! Minimal SVG charts: line plots and histograms with linear axes.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
const TICKS: usize = 5;

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(
        xs: impl Iterator<Item = f64> + Clone,
        ys: impl Iterator<Item = f64> + Clone,
        y_from_zero: bool,
    ) -> Self {
        let bounds = |it: &mut dyn Iterator<Item = f64>| {
            it.filter(|v| v.is_finite())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                })
        };
        let (mut x0, mut x1) = bounds(&mut xs.clone());
        let (mut y0, mut y1) = bounds(&mut ys.clone());
        if !x0.is_finite() {
            (x0, x1) = (0.0, 1.0);
        }
        if !y0.is_finite() {
            (y0, y1) = (0.0, 1.0);
        }
        if y_from_zero {
            y0 = y0.min(0.0);
        }
        if x1 - x0 < 1e-12 {
            x1 = x0 + 1.0;
        }
        if y1 - y0 < 1e-12 {
            y1 = y0 + 1.0;
        }
        Frame { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn header(out: &mut String, title: &str, frame: &Frame, x_label: &str, y_label: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        out,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        (WIDTH - RIGHT + LEFT) / 2.0,
        escape(title)
    );
    let (bx, by) = (LEFT, HEIGHT - BOTTOM);
    let _ = writeln!(
        out,
        r##"<path d="M{bx:.1},{TOP:.1} L{bx:.1},{by:.1} L{:.1},{by:.1}" fill="none" stroke="#333"/>"##,
        WIDTH - RIGHT
    );
    for i in 0..=TICKS {
        let f = i as f64 / TICKS as f64;
        let xv = frame.x0 + f * (frame.x1 - frame.x0);
        let yv = frame.y0 + f * (frame.y1 - frame.y0);
        let (x, y) = (frame.px(xv), frame.py(yv));
        let _ = writeln!(
            out,
            r##"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text><path d="M{LEFT:.1},{y:.1} L{:.1},{y:.1}" stroke="#ddd"/>"##,
            by + 16.0,
            tick_label(xv),
            LEFT - 6.0,
            y + 4.0,
            tick_label(yv),
            WIDTH - RIGHT
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (WIDTH - RIGHT + LEFT) / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (HEIGHT - BOTTOM + TOP) / 2.0,
        (HEIGHT - BOTTOM + TOP) / 2.0,
        escape(y_label)
    );
}

fn tick_label(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.trunc() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let ys = series.iter().flat_map(|s| s.points.iter().map(|p| p.1));
    let frame = Frame::new(xs, ys, true);
    let mut out = String::new();
    header(&mut out, title, &frame, x_label, y_label);
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let d: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.1},{:.1}", frame.px(x), frame.py(y)))
            .collect();
        if !d.is_empty() {
            let _ = writeln!(
                out,
                r#"<path d="M{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                d.join(" L")
            );
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(
            out,
            r#"<path d="M{lx:.1},{ly:.1} L{:.1},{ly:.1}" stroke="{color}" stroke-width="3"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Bars spanning `[lo, hi)` with height `count`.
pub fn histogram(title: &str, x_label: &str, bins: &[(f64, f64, usize)]) -> String {
    let xs = bins.iter().flat_map(|b| [b.0, b.1]);
    let ys = bins.iter().map(|b| b.2 as f64);
    let frame = Frame::new(xs, ys, true);
    let mut out = String::new();
    header(&mut out, title, &frame, x_label, "count");
    for &(lo, hi, c) in bins {
        let (x0, x1) = (frame.px(lo), frame.px(hi));
        let (y0, y1) = (frame.py(c as f64), frame.py(0.0));
        let _ = writeln!(
            out,
            r##"<rect x="{x0:.1}" y="{y0:.1}" width="{:.1}" height="{:.1}" fill="#1f77b4" stroke="white"/>"##,
            (x1 - x0).max(0.0),
            (y1 - y0).max(0.0)
        );
    }
    out.push_str("</svg>\n");
    out
}
