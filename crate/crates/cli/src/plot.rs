//! Minimal SVG charts: line plots with an optional shaded band, and grouped
//! histograms. Output is plain text and deterministic for identical input.

use std::fmt::Write;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 160.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;

pub const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#7f7f7f"];

#[derive(Debug, Clone)]
pub struct Line {
    pub label: String,
    pub color: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub dashed: bool,
}

/// Filled region between `lo` and `hi` sampled at `x`.
#[derive(Debug, Clone)]
pub struct Band {
    pub label: String,
    pub color: String,
    pub x: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub lines: Vec<Line>,
    pub bands: Vec<Band>,
    /// Horizontal reference lines as (label, y).
    pub rules: Vec<(String, f64)>,
    /// Fixed y range; data outside is clipped.
    pub y_limits: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct HistogramGroup {
    pub label: String,
    pub color: String,
    /// Relative frequency per bin.
    pub freq: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct HistogramChart {
    pub title: String,
    pub x_label: String,
    pub bin_width: f64,
    pub groups: Vec<HistogramGroup>,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn plot_width() -> f64 {
        WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    }

    fn plot_height() -> f64 {
        HEIGHT - MARGIN_TOP - MARGIN_BOTTOM
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x0) / (self.x1 - self.x0) * Self::plot_width()
    }

    fn py(&self, y: f64) -> f64 {
        MARGIN_TOP + (self.y1 - y) / (self.y1 - self.y0) * Self::plot_height()
    }
}

/// Tick positions at a 1/2/5 × 10^k spacing covering `[lo, hi]`.
pub fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return vec![lo];
    }
    let raw = (hi - lo) / target.max(1) as f64;
    let exp = raw.log10().floor() as i32;
    let mag = 10f64.powi(exp);
    let m = [1.0, 2.0, 5.0, 10.0].into_iter().find(|m| m * mag >= raw * (1.0 - 1e-9)).unwrap_or(10.0);
    let step = m * mag;
    let tick = |i: i64| if exp < 0 { i as f64 * m / 10f64.powi(-exp) } else { i as f64 * step };
    let first = (lo / step - 1e-9).ceil() as i64;
    let last = (hi / step + 1e-9).floor() as i64;
    (first..=last).map(tick).collect()
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Keeps the per-column minimum and maximum so that spikes survive
/// downsampling to roughly one point pair per horizontal pixel.
fn decimate(x: &[f64], y: &[f64], buckets: usize) -> Vec<(f64, f64)> {
    let n = x.len().min(y.len());
    if n <= 2 * buckets {
        return x.iter().zip(y).map(|(&a, &b)| (a, b)).collect();
    }
    let mut out = Vec::with_capacity(2 * buckets);
    for b in 0..buckets {
        let start = b * n / buckets;
        let end = ((b + 1) * n / buckets).max(start + 1);
        let (mut imin, mut imax) = (start, start);
        for i in start..end {
            if y[i] < y[imin] {
                imin = i;
            }
            if y[i] > y[imax] {
                imax = i;
            }
        }
        let (a, c) = if imin <= imax { (imin, imax) } else { (imax, imin) };
        out.push((x[a], y[a]));
        if c != a {
            out.push((x[c], y[c]));
        }
    }
    out
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(svg: &mut String, title: &str) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        MARGIN_LEFT + Frame::plot_width() / 2.0,
        escape(title)
    );
}

fn axes(svg: &mut String, frame: &Frame, x_label: &str, y_label: &str) {
    let (left, right) = (MARGIN_LEFT, MARGIN_LEFT + Frame::plot_width());
    let (top, bottom) = (MARGIN_TOP, MARGIN_TOP + Frame::plot_height());
    for t in nice_ticks(frame.y0, frame.y1, 6) {
        let y = frame.py(t);
        let _ = writeln!(svg, r##"<line x1="{left:.1}" y1="{y:.1}" x2="{right:.1}" y2="{y:.1}" stroke="#e0e0e0"/>"##);
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, left - 6.0, y + 4.0, tick_label(t));
    }
    for t in nice_ticks(frame.x0, frame.x1, 8) {
        let x = frame.px(t);
        let _ = writeln!(svg, r##"<line x1="{x:.1}" y1="{bottom:.1}" x2="{x:.1}" y2="{:.1}" stroke="#333"/>"##, bottom + 5.0);
        let _ = writeln!(svg, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, bottom + 18.0, tick_label(t));
    }
    let _ = writeln!(
        svg,
        r##"<rect x="{left:.1}" y="{top:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#333"/>"##,
        Frame::plot_width(),
        Frame::plot_height()
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (left + right) / 2.0,
        HEIGHT - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (top + bottom) / 2.0,
        (top + bottom) / 2.0,
        escape(y_label)
    );
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn legend(svg: &mut String, entries: &[(&str, &str, bool)]) {
    let x = MARGIN_LEFT + Frame::plot_width() + 12.0;
    for (i, (label, color, dashed)) in entries.iter().enumerate() {
        let y = MARGIN_TOP + 10.0 + 18.0 * i as f64;
        let dash = if *dashed { r#" stroke-dasharray="5 3""# } else { "" };
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{color}" stroke-width="3"{dash}/>"#,
            x + 20.0
        );
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, x + 26.0, y + 4.0, escape(label));
    }
}

fn polyline(points: &[(f64, f64)], frame: &Frame) -> String {
    let mut s = String::with_capacity(points.len() * 14);
    for (i, (x, y)) in points.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{:.1},{:.1}", frame.px(*x), frame.py(*y));
    }
    s
}

impl LineChart {
    pub fn render(&self) -> String {
        let buckets = Frame::plot_width() as usize;
        let xs = self.lines.iter().flat_map(|l| l.x.iter().copied()).chain(self.bands.iter().flat_map(|b| b.x.iter().copied()));
        let (x0, x1) = {
            let (lo, hi) = padded_range(xs);
            let pad = (hi - lo) / 1.1 * 0.05;
            (lo + pad, hi - pad)
        };
        let ys = self
            .lines
            .iter()
            .flat_map(|l| l.y.iter().copied())
            .chain(self.bands.iter().flat_map(|b| b.lo.iter().chain(&b.hi).copied()))
            .chain(self.rules.iter().map(|r| r.1));
        let (y0, y1) = self.y_limits.unwrap_or_else(|| padded_range(ys));
        let frame = Frame { x0, x1: if x1 > x0 { x1 } else { x0 + 1.0 }, y0, y1 };

        let mut svg = String::new();
        header(&mut svg, &self.title);
        axes(&mut svg, &frame, &self.x_label, &self.y_label);
        let _ = writeln!(
            svg,
            r#"<clipPath id="plot"><rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{:.1}" height="{:.1}"/></clipPath>"#,
            Frame::plot_width(),
            Frame::plot_height()
        );
        let _ = writeln!(svg, r#"<g clip-path="url(#plot)">"#);
        for band in &self.bands {
            let upper = decimate(&band.x, &band.hi, buckets);
            let mut lower = decimate(&band.x, &band.lo, buckets);
            lower.reverse();
            let outline: Vec<(f64, f64)> = upper.into_iter().chain(lower).collect();
            let _ = writeln!(
                svg,
                r#"<polygon points="{}" fill="{}" fill-opacity="0.3" stroke="none"/>"#,
                polyline(&outline, &frame),
                band.color
            );
        }
        for line in &self.lines {
            let dash = if line.dashed { r#" stroke-dasharray="5 3""# } else { "" };
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.2"{dash}/>"#,
                polyline(&decimate(&line.x, &line.y, buckets), &frame),
                line.color
            );
        }
        for (label, y) in &self.rules {
            let py = frame.py(*y);
            let _ = writeln!(
                svg,
                r##"<line x1="{MARGIN_LEFT}" y1="{py:.1}" x2="{:.1}" y2="{py:.1}" stroke="#000" stroke-dasharray="2 4"/>"##,
                MARGIN_LEFT + Frame::plot_width()
            );
            let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" font-size="10">{}</text>"#, MARGIN_LEFT + 4.0, py - 3.0, escape(label));
        }
        let _ = writeln!(svg, "</g>");
        let mut entries: Vec<(&str, &str, bool)> =
            self.bands.iter().map(|b| (b.label.as_str(), b.color.as_str(), false)).collect();
        entries.extend(self.lines.iter().map(|l| (l.label.as_str(), l.color.as_str(), l.dashed)));
        legend(&mut svg, &entries);
        svg.push_str("</svg>\n");
        svg
    }
}

impl HistogramChart {
    pub fn render(&self) -> String {
        let n_bins = self.groups.iter().map(|g| g.freq.len()).max().unwrap_or(0).max(1);
        let y_max = self.groups.iter().flat_map(|g| g.freq.iter().copied()).fold(0.0, f64::max);
        let frame = Frame {
            x0: 0.0,
            x1: n_bins as f64 * self.bin_width,
            y0: 0.0,
            y1: if y_max > 0.0 { y_max * 1.05 } else { 1.0 },
        };
        let mut svg = String::new();
        header(&mut svg, &self.title);
        axes(&mut svg, &frame, &self.x_label, "relative frequency");
        let slot = self.bin_width / self.groups.len().max(1) as f64;
        for (g, group) in self.groups.iter().enumerate() {
            for (i, &f) in group.freq.iter().enumerate() {
                if f <= 0.0 {
                    continue;
                }
                let left = i as f64 * self.bin_width + g as f64 * slot;
                let (x, w) = (frame.px(left), frame.px(left + slot) - frame.px(left));
                let (y, h) = (frame.py(f), frame.py(0.0) - frame.py(f));
                let _ = writeln!(
                    svg,
                    r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{}" fill-opacity="0.75"/>"#,
                    group.color
                );
            }
        }
        let entries: Vec<(&str, &str, bool)> =
            self.groups.iter().map(|g| (g.label.as_str(), g.color.as_str(), false)).collect();
        legend(&mut svg, &entries);
        svg.push_str("</svg>\n");
        svg
    }
}

/// Normalizes bin counts to relative frequencies.
pub fn frequencies(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return vec![0.0; counts.len()];
    }
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}
