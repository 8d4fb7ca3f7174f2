//! Minimal deterministic SVG charts.

use std::fmt::Write as _;

pub const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

pub fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mark {
    Line { dashed: bool },
    Dot,
    Cross,
    Ring,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub mark: Mark,
    pub color: String,
}

#[derive(Debug, Clone)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

const PANEL_W: f64 = 640.0;
const PANEL_H: f64 = 300.0;
const LEFT: f64 = 78.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 34.0;
const BOTTOM: f64 = 46.0;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn num(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

/// Round tick spacing covering `[lo, hi]` with about five intervals.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-3..1e4).contains(&a) {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.2e}")
    }
}

fn bounds(series: &[Series]) -> (f64, f64, f64, f64) {
    let mut b = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for &(x, y) in &s.points {
            if x.is_finite() && y.is_finite() {
                b = (b.0.min(x), b.1.max(x), b.2.min(y), b.3.max(y));
            }
        }
    }
    if !b.0.is_finite() {
        return (0.0, 1.0, 0.0, 1.0);
    }
    let pad = |lo: f64, hi: f64| {
        let span = hi - lo;
        let p = if span > 0.0 { 0.05 * span } else { lo.abs().max(1e-9) * 0.1 };
        (lo - p, hi + p)
    };
    let (x0, x1) = pad(b.0, b.1);
    let (y0, y1) = pad(b.2, b.3);
    (x0, x1, y0, y1)
}

fn render_panel(out: &mut String, panel: &Panel, oy: f64) {
    let (x0, x1, y0, y1) = bounds(&panel.series);
    let pw = PANEL_W - LEFT - RIGHT;
    let ph = PANEL_H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| oy + TOP + ph - (y - y0) / (y1 - y0) * ph;

    let _ = writeln!(
        out,
        r##"<text x="{}" y="{}" font-size="14" text-anchor="middle">{}</text>"##,
        num(LEFT + pw / 2.0),
        num(oy + 20.0),
        esc(&panel.title)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
        num(LEFT),
        num(oy + TOP),
        num(pw),
        num(ph)
    );
    for t in ticks(x0, x1) {
        let x = sx(t);
        let _ = writeln!(
            out,
            r##"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="#ddd"/><text x="{0}" y="{3}" font-size="10" text-anchor="middle">{4}</text>"##,
            num(x),
            num(oy + TOP),
            num(oy + TOP + ph),
            num(oy + TOP + ph + 14.0),
            tick_label(t)
        );
    }
    for t in ticks(y0, y1) {
        let y = sy(t);
        let _ = writeln!(
            out,
            r##"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="#ddd"/><text x="{3}" y="{4}" font-size="10" text-anchor="end">{5}</text>"##,
            num(LEFT),
            num(y),
            num(LEFT + pw),
            num(LEFT - 4.0),
            num(y + 3.0),
            tick_label(t)
        );
    }
    let _ = writeln!(
        out,
        r##"<text x="{}" y="{}" font-size="11" text-anchor="middle">{}</text>"##,
        num(LEFT + pw / 2.0),
        num(oy + PANEL_H - 10.0),
        esc(&panel.x_label)
    );
    let _ = writeln!(
        out,
        r##"<text x="14" y="{0}" font-size="11" text-anchor="middle" transform="rotate(-90 14 {0})">{1}</text>"##,
        num(oy + TOP + ph / 2.0),
        esc(&panel.y_label)
    );

    for (i, s) in panel.series.iter().enumerate() {
        match s.mark {
            Mark::Line { dashed } => {
                let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{},{}", num(sx(x)), num(sy(y)))).collect();
                let dash = if dashed { r#" stroke-dasharray="6 4""# } else { "" };
                let _ = writeln!(
                    out,
                    r##"<polyline fill="none" stroke="{}" stroke-width="1.5"{} points="{}"/>"##,
                    s.color,
                    dash,
                    pts.join(" ")
                );
            }
            Mark::Dot => {
                for &(x, y) in &s.points {
                    let _ = writeln!(out, r##"<circle cx="{}" cy="{}" r="3" fill="{}"/>"##, num(sx(x)), num(sy(y)), s.color);
                }
            }
            Mark::Ring => {
                for &(x, y) in &s.points {
                    let _ = writeln!(
                        out,
                        r##"<circle cx="{}" cy="{}" r="6" fill="none" stroke="{}" stroke-width="1.5"/>"##,
                        num(sx(x)),
                        num(sy(y)),
                        s.color
                    );
                }
            }
            Mark::Cross => {
                for &(x, y) in &s.points {
                    let (cx, cy) = (sx(x), sy(y));
                    let _ = writeln!(
                        out,
                        r##"<path d="M{} {} L{} {} M{} {} L{} {}" stroke="{}" stroke-width="2"/>"##,
                        num(cx - 5.0),
                        num(cy - 5.0),
                        num(cx + 5.0),
                        num(cy + 5.0),
                        num(cx - 5.0),
                        num(cy + 5.0),
                        num(cx + 5.0),
                        num(cy - 5.0),
                        s.color
                    );
                }
            }
        }
        let ly = oy + TOP + 8.0 + 16.0 * i as f64;
        let lx = PANEL_W - RIGHT + 10.0;
        let _ = writeln!(
            out,
            r##"<rect x="{}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}" font-size="10">{}</text>"##,
            num(lx),
            num(ly - 8.0),
            s.color,
            num(lx + 14.0),
            num(ly + 1.0),
            esc(&s.name)
        );
    }
}

/// Panels stacked vertically in one SVG document.
pub fn render(panels: &[Panel]) -> String {
    let h = PANEL_H * panels.len().max(1) as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}" font-family="sans-serif">"##,
        num(PANEL_W),
        num(h),
        num(PANEL_W),
        num(h)
    );
    let _ = writeln!(out, r##"<rect width="100%" height="100%" fill="white"/>"##);
    for (i, p) in panels.iter().enumerate() {
        render_panel(&mut out, p, PANEL_H * i as f64);
    }
    out.push_str("</svg>\n");
    out
}

/// Grouped bar chart: one group of bars per category.
pub fn bar_chart(title: &str, y_label: &str, categories: &[String], bars: &[(String, Vec<f64>)]) -> String {
    let n_cat = categories.len().max(1);
    let width = (LEFT + RIGHT + 18.0 * n_cat as f64 * bars.len().max(1) as f64).max(PANEL_W);
    let pw = width - LEFT - RIGHT;
    let ph = PANEL_H - TOP - BOTTOM;
    let ymax = bars
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max)
        .max(1e-12)
        * 1.05;
    let sy = |y: f64| TOP + ph - y / ymax * ph;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}" font-family="sans-serif">"##,
        num(width),
        num(PANEL_H),
        num(width),
        num(PANEL_H)
    );
    let _ = writeln!(out, r##"<rect width="100%" height="100%" fill="white"/>"##);
    let _ = writeln!(
        out,
        r##"<text x="{}" y="20" font-size="14" text-anchor="middle">{}</text>"##,
        num(LEFT + pw / 2.0),
        esc(title)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
        num(LEFT),
        num(TOP),
        num(pw),
        num(ph)
    );
    for t in ticks(0.0, ymax) {
        let _ = writeln!(
            out,
            r##"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="#ddd"/><text x="{3}" y="{4}" font-size="10" text-anchor="end">{5}</text>"##,
            num(LEFT),
            num(sy(t)),
            num(LEFT + pw),
            num(LEFT - 4.0),
            num(sy(t) + 3.0),
            tick_label(t)
        );
    }
    let _ = writeln!(
        out,
        r##"<text x="14" y="{0}" font-size="11" text-anchor="middle" transform="rotate(-90 14 {0})">{1}</text>"##,
        num(TOP + ph / 2.0),
        esc(y_label)
    );
    let slot = pw / n_cat as f64;
    let bw = slot * 0.8 / bars.len().max(1) as f64;
    for (c, cat) in categories.iter().enumerate() {
        let x0 = LEFT + slot * c as f64 + slot * 0.1;
        for (b, (_, values)) in bars.iter().enumerate() {
            let v = values.get(c).copied().unwrap_or(0.0).max(0.0);
            let _ = writeln!(
                out,
                r##"<rect x="{}" y="{}" width="{}" height="{}" fill="{}"/>"##,
                num(x0 + bw * b as f64),
                num(sy(v)),
                num(bw),
                num(TOP + ph - sy(v)),
                color(b)
            );
        }
        let cx = x0 + slot * 0.4;
        let cy = TOP + ph + 10.0;
        let _ = writeln!(
            out,
            r##"<text x="{0}" y="{1}" font-size="9" text-anchor="end" transform="rotate(-60 {0} {1})">{2}</text>"##,
            num(cx),
            num(cy),
            esc(cat)
        );
    }
    for (b, (name, _)) in bars.iter().enumerate() {
        let ly = TOP + 8.0 + 16.0 * b as f64;
        let lx = width - RIGHT + 10.0;
        let _ = writeln!(
            out,
            r##"<rect x="{}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}" font-size="10">{}</text>"##,
            num(lx),
            num(ly - 8.0),
            color(b),
            num(lx + 14.0),
            num(ly + 1.0),
            esc(name)
        );
    }
    out.push_str("</svg>\n");
    out
}
