//! Minimal SVG 1.1 line plots.

use std::fmt::Write;

const COLORS: [&str; 6] = ["#d62728", "#2ca02c", "#1f77b4", "#ff7f0e", "#9467bd", "#8c564b"];
const DASHES: [&str; 3] = ["", "6,3", "2,3"];

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    /// Draw markers only, no connecting line.
    pub markers: bool,
}

#[derive(Debug, Clone)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

const W: f64 = 420.0;
const H: f64 = 300.0;
const LEFT: f64 = 62.0;
const RIGHT: f64 = 12.0;
const TOP: f64 = 28.0;
const BOTTOM: f64 = 44.0;

fn fmt_tick(v: f64, log: bool) -> String {
    if log {
        format!("1e{}", v.round() as i64)
    } else if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn ticks(lo: f64, hi: f64, log: bool) -> Vec<f64> {
    if log {
        let (a, b) = (lo.ceil() as i64, hi.floor() as i64);
        let stride = ((b - a) / 6).max(1);
        return (a..=b).step_by(stride as usize).map(|v| v as f64).collect();
    }
    let span = (hi - lo).max(1e-300);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let mut v = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while v <= hi + 1e-9 * step {
        out.push(if v.abs() < 1e-12 * step { 0.0 } else { v });
        v += step;
    }
    out
}

fn range(vals: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return None;
    }
    if hi - lo < 1e-12 * hi.abs().max(1e-300) {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        return Some((lo - pad, hi + pad));
    }
    Some((lo, hi))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Plot {
    fn transformed(&self) -> Vec<Vec<(f64, f64)>> {
        let tx = |v: f64, log: bool| if log { v.log10() } else { v };
        self.series
            .iter()
            .map(|s| {
                s.points
                    .iter()
                    .filter(|(x, y)| (!self.log_x || *x > 0.0) && (!self.log_y || *y > 0.0))
                    .map(|&(x, y)| (tx(x, self.log_x), tx(y, self.log_y)))
                    .filter(|(x, y)| x.is_finite() && y.is_finite())
                    .collect()
            })
            .collect()
    }

    fn render_into(&self, out: &mut String, ox: f64, oy: f64) {
        let data = self.transformed();
        let xr = range(data.iter().flatten().map(|p| p.0)).unwrap_or((0.0, 1.0));
        let yr = range(data.iter().flatten().map(|p| p.1)).unwrap_or((0.0, 1.0));
        let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
        let sx = |x: f64| ox + LEFT + (x - xr.0) / (xr.1 - xr.0) * pw;
        let sy = |y: f64| oy + TOP + ph - (y - yr.0) / (yr.1 - yr.0) * ph;

        let _ = writeln!(
            out,
            r##"<rect x="{:.2}" y="{:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="#444"/>"##,
            ox + LEFT,
            oy + TOP
        );
        let _ = writeln!(
            out,
            r##"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="13">{}</text>"##,
            ox + W / 2.0,
            oy + 18.0,
            escape(&self.title)
        );
        for t in ticks(xr.0, xr.1, self.log_x) {
            let x = sx(t);
            let _ = writeln!(
                out,
                r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#444"/><text x="{x:.2}" y="{:.2}" text-anchor="middle" font-size="10">{}</text>"##,
                oy + TOP + ph,
                oy + TOP + ph + 4.0,
                oy + TOP + ph + 15.0,
                fmt_tick(t, self.log_x)
            );
        }
        for t in ticks(yr.0, yr.1, self.log_y) {
            let y = sy(t);
            let _ = writeln!(
                out,
                r##"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#444"/><text x="{:.2}" y="{:.2}" text-anchor="end" font-size="10">{}</text>"##,
                ox + LEFT - 4.0,
                ox + LEFT,
                ox + LEFT - 6.0,
                y + 3.5,
                fmt_tick(t, self.log_y)
            );
        }
        let _ = writeln!(
            out,
            r##"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="11">{}</text>"##,
            ox + LEFT + pw / 2.0,
            oy + H - 8.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r##"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="11" transform="rotate(-90 {:.2} {:.2})">{}</text>"##,
            ox + 14.0,
            oy + TOP + ph / 2.0,
            ox + 14.0,
            oy + TOP + ph / 2.0,
            escape(&self.y_label)
        );

        for (i, (s, pts)) in self.series.iter().zip(&data).enumerate() {
            let color = COLORS[i % COLORS.len()];
            if s.markers {
                for &(x, y) in pts {
                    let _ = writeln!(
                        out,
                        r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"##,
                        sx(x),
                        sy(y)
                    );
                }
            } else if !pts.is_empty() {
                let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
                let dash = DASHES[(i / COLORS.len()) % DASHES.len()];
                let dash = if dash.is_empty() {
                    String::new()
                } else {
                    format!(r##" stroke-dasharray="{dash}""##)
                };
                let _ = writeln!(
                    out,
                    r##"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"##,
                    path.join(" ")
                );
            }
            let ly = oy + TOP + 12.0 + 13.0 * i as f64;
            let _ = writeln!(
                out,
                r##"<text x="{:.2}" y="{ly:.2}" font-size="10" fill="{color}" text-anchor="end">{}</text>"##,
                ox + W - RIGHT - 6.0,
                escape(&s.name)
            );
        }
    }
}

/// Lays plots out on a grid with `cols` columns.
pub fn render(plots: &[Plot], cols: usize) -> String {
    let cols = cols.max(1).min(plots.len().max(1));
    let rows = plots.len().div_ceil(cols).max(1);
    let mut out = String::new();
    let _ = writeln!(out, r##"<?xml version="1.0" encoding="UTF-8"?>"##);
    let _ = writeln!(
        out,
        r##"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{}" height="{}" font-family="sans-serif">"##,
        W * cols as f64,
        H * rows as f64
    );
    let _ = writeln!(out, r##"<rect width="100%" height="100%" fill="white"/>"##);
    for (i, p) in plots.iter().enumerate() {
        p.render_into(&mut out, W * (i % cols) as f64, H * (i / cols) as f64);
    }
    out.push_str("</svg>\n");
    out
}
