//! Minimal line plots rendered from CSV text.

use std::fmt::Write as _;

use anyhow::{anyhow, bail, Result};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

/// Which CSV columns to draw.
#[derive(Debug, Clone)]
pub struct PlotSpec {
    pub title: String,
    pub x: String,
    pub series: Vec<String>,
    /// Column splitting rows into separate curves (e.g. `state`).
    pub group: Option<String>,
}

impl PlotSpec {
    pub fn new(title: impl Into<String>, x: &str, series: &[&str]) -> Self {
        Self {
            title: title.into(),
            x: x.to_string(),
            series: series.iter().map(|s| s.to_string()).collect(),
            group: None,
        }
    }

    pub fn grouped_by(mut self, column: &str) -> Self {
        self.group = Some(column.to_string());
        self
    }
}

struct Curve {
    label: String,
    points: Vec<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-300);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| span / s <= 6.0).unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut ticks = Vec::new();
    while t <= hi + 1e-9 * step {
        ticks.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    ticks
}

/// Renders the columns named in `spec` from `csv_text` as an SVG document.
pub fn render(csv_text: &str, spec: &PlotSpec) -> Result<String> {
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    let header = reader.headers()?.clone();
    let col = |name: &str| header.iter().position(|h| h == name).ok_or_else(|| anyhow!("no column '{name}'"));
    let xi = col(&spec.x)?;
    let gi = spec.group.as_deref().map(col).transpose()?;
    let si: Vec<usize> = spec.series.iter().map(|s| col(s)).collect::<Result<_>>()?;

    let mut curves: Vec<Curve> = Vec::new();
    let mut categories: Vec<String> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let x_raw = &record[xi];
        let x = match x_raw.parse::<f64>() {
            Ok(v) => v,
            Err(_) => {
                let pos = categories.iter().position(|c| c == x_raw).unwrap_or_else(|| {
                    categories.push(x_raw.to_string());
                    categories.len() - 1
                });
                pos as f64
            }
        };
        for (k, &c) in si.iter().enumerate() {
            let label = match gi {
                Some(g) => format!("{} [{}]", spec.series[k], &record[g]),
                None => spec.series[k].clone(),
            };
            let Ok(y) = record[c].parse::<f64>() else { continue };
            if !y.is_finite() {
                continue;
            }
            match curves.iter_mut().find(|cv| cv.label == label) {
                Some(cv) => cv.points.push((x, y)),
                None => curves.push(Curve { label, points: vec![(x, y)] }),
            }
        }
    }
    if curves.is_empty() {
        bail!("nothing to plot for '{}'", spec.title);
    }

    let all = curves.iter().flat_map(|c| c.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in all {
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
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )?;
    writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#)?;
    writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, LEFT + pw / 2.0, escape(&spec.title))?;
    writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#)?;

    if categories.is_empty() {
        for t in nice_ticks(x0, x1) {
            let x = sx(t);
            writeln!(s, r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/>"#, TOP + ph, TOP + ph + 5.0)?;
            writeln!(s, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{t}</text>"#, TOP + ph + 18.0)?;
        }
    } else {
        for (k, c) in categories.iter().enumerate() {
            let x = sx(k as f64);
            writeln!(s, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, escape(c))?;
        }
    }
    for t in nice_ticks(y0, y1) {
        let y = sy(t);
        writeln!(s, r#"<line x1="{}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#, LEFT - 5.0)?;
        writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 8.0, y + 4.0, format_tick(t))?;
    }
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, HEIGHT - 10.0, escape(&spec.x))?;

    for (k, c) in curves.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = c.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "))?;
        let ly = TOP + 10.0 + 16.0 * k as f64;
        let lx = LEFT + pw + 12.0;
        writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0)?;
        writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&c.label))?;
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn format_tick(t: f64) -> String {
    let s = format!("{t:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}
