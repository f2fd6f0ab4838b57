//! CSV tables and small static SVG figures: axes and marks only.

use std::fmt::Write as _;

use crate::features::Histogram;
use crate::linalg::Matrix;

const W: f64 = 640.0;
const H: f64 = 420.0;
const M: f64 = 60.0;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        W / 2.0,
        esc(title)
    )
}

/// Linear map of a data range onto pixel span `[p0, p1]`.
#[derive(Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    p0: f64,
    p1: f64,
}

impl Axis {
    fn new(lo: f64, hi: f64, p0: f64, p1: f64) -> Self {
        let (lo, hi) = if !(lo.is_finite() && hi.is_finite()) {
            (0.0, 1.0)
        } else if hi - lo <= f64::EPSILON * lo.abs().max(1.0) {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        };
        Self { lo, hi, p0, p1 }
    }

    fn px(&self, v: f64) -> f64 {
        self.p0 + (v - self.lo) / (self.hi - self.lo) * (self.p1 - self.p0)
    }
}

fn extent(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    vals.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
}

fn frame(out: &mut String, xa: Axis, ya: Axis, x_label: &str, y_label: &str) {
    let (x0, x1, y0, y1) = (M, W - M / 2.0, H - M, M / 2.0 + 10.0);
    let _ = writeln!(out, "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>");
    let _ = writeln!(out, "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>");
    for k in 0..=4 {
        let t = f64::from(k) / 4.0;
        let xv = xa.lo + t * (xa.hi - xa.lo);
        let yv = ya.lo + t * (ya.hi - ya.lo);
        let (px, py) = (xa.px(xv), ya.px(yv));
        let _ = writeln!(out, "<line x1=\"{px:.1}\" y1=\"{y0}\" x2=\"{px:.1}\" y2=\"{}\" stroke=\"black\"/>", y0 + 4.0);
        let _ = writeln!(out, "<text x=\"{px:.1}\" y=\"{}\" text-anchor=\"middle\">{}</text>", y0 + 16.0, tick(xv));
        let _ = writeln!(out, "<line x1=\"{}\" y1=\"{py:.1}\" x2=\"{x0}\" y2=\"{py:.1}\" stroke=\"black\"/>", x0 - 4.0);
        let _ = writeln!(out, "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>", x0 - 6.0, py + 4.0, tick(yv));
    }
    let _ = writeln!(out, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>", (x0 + x1) / 2.0, H - 20.0, esc(x_label));
    let _ = writeln!(
        out,
        "<text x=\"14\" y=\"{0}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {0})\">{1}</text>",
        (y0 + y1) / 2.0,
        esc(y_label)
    );
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}").trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn x_axis(lo: f64, hi: f64) -> Axis {
    Axis::new(lo, hi, M, W - M / 2.0)
}

fn y_axis(lo: f64, hi: f64) -> Axis {
    Axis::new(lo, hi, H - M, M / 2.0 + 10.0)
}

/// Diverging colour for values in [-1, 1]: blue, white, red.
fn diverging(v: f64) -> String {
    let t = if v.is_finite() { v.clamp(-1.0, 1.0) } else { 0.0 };
    let fade = |c: f64| (255.0 * (1.0 - t.abs()) + c * t.abs()).round() as u8;
    if t >= 0.0 {
        format!("rgb({},{},{})", fade(200.0), fade(30.0), fade(30.0))
    } else {
        format!("rgb({},{},{})", fade(30.0), fade(60.0), fade(200.0))
    }
}

/// Labelled square matrix, e.g. correlations.
pub fn svg_heatmap(title: &str, labels: &[String], m: &Matrix<f64>) -> String {
    let mut out = header(title);
    let n = labels.len().max(1) as f64;
    let side = ((H - 140.0) / n).min((W - 200.0) / n);
    let (ox, oy) = (130.0, 40.0);
    for (i, li) in labels.iter().enumerate() {
        let y = oy + i as f64 * side;
        let _ = writeln!(out, "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>", ox - 4.0, y + side * 0.6, esc(li));
        for j in 0..labels.len() {
            let v = m[(i, j)];
            let x = ox + j as f64 * side;
            let _ = writeln!(
                out,
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{side:.1}\" height=\"{side:.1}\" fill=\"{}\"><title>{:.3}</title></rect>",
                diverging(v),
                v
            );
        }
    }
    for (j, lj) in labels.iter().enumerate() {
        let x = ox + (j as f64 + 0.5) * side;
        let y = oy + n * side + 6.0;
        let _ = writeln!(out, "<text x=\"{x:.1}\" y=\"{y:.1}\" transform=\"rotate(60 {x:.1} {y:.1})\">{}</text>", esc(lj));
    }
    out.push_str("</svg>\n");
    out
}

pub fn svg_histogram(title: &str, x_label: &str, h: &Histogram) -> String {
    let mut out = header(title);
    let (lo, hi) = (h.edges.first().copied().unwrap_or(0.0), h.edges.last().copied().unwrap_or(1.0));
    let top = h.counts.iter().copied().max().unwrap_or(0) as f64;
    let (xa, ya) = (x_axis(lo, hi), y_axis(0.0, top.max(1.0)));
    frame(&mut out, xa, ya, x_label, "count");
    for (k, &c) in h.counts.iter().enumerate() {
        let (x0, x1) = (xa.px(h.edges[k]), xa.px(h.edges[k + 1]));
        let y = ya.px(c as f64);
        let _ = writeln!(
            out,
            "<rect x=\"{x0:.1}\" y=\"{y:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"steelblue\" stroke=\"white\"/>",
            (x1 - x0).max(0.5),
            ya.px(0.0) - y
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Horizontal bars, one per label, in the given order.
pub fn svg_bars(title: &str, x_label: &str, labels: &[String], values: &[f64]) -> String {
    let mut out = header(title);
    let (_, hi) = extent(values.iter().copied().chain([0.0]));
    let xa = Axis::new(0.0, hi, 150.0, W - M / 2.0);
    let row = (H - 100.0) / labels.len().max(1) as f64;
    for (k, (l, &v)) in labels.iter().zip(values).enumerate() {
        let y = 40.0 + k as f64 * row;
        let _ = writeln!(out, "<text x=\"144\" y=\"{:.1}\" text-anchor=\"end\">{}</text>", y + row * 0.6, esc(l));
        let _ = writeln!(
            out,
            "<rect x=\"150\" y=\"{y:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"steelblue\"><title>{v}</title></rect>",
            (xa.px(v) - 150.0).max(0.0),
            row * 0.8
        );
    }
    let _ = writeln!(out, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>", W / 2.0, H - 20.0, esc(x_label));
    out.push_str("</svg>\n");
    out
}

const PALETTE: [&str; 6] = ["steelblue", "darkorange", "seagreen", "crimson", "purple", "saddlebrown"];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Polylines with markers and a legend.
pub fn svg_lines(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let mut out = header(title);
    let all = || series.iter().flat_map(|s| s.points.iter());
    let (xl, xh) = extent(all().map(|p| p.0));
    let (yl, yh) = extent(all().map(|p| p.1));
    let (xa, ya) = (x_axis(xl, xh), y_axis(yl, yh));
    frame(&mut out, xa, ya, x_label, y_label);
    for (k, s) in series.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.1},{:.1}", xa.px(x), ya.px(y))).collect();
        let _ = writeln!(out, "<polyline points=\"{}\" fill=\"none\" stroke=\"{colour}\"/>", pts.join(" "));
        for &(x, y) in &s.points {
            let _ = writeln!(out, "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"{colour}\"/>", xa.px(x), ya.px(y));
        }
        let ly = 40.0 + 14.0 * k as f64;
        let _ = writeln!(out, "<text x=\"{}\" y=\"{ly}\" fill=\"{colour}\" text-anchor=\"end\">{}</text>", W - 40.0, esc(&s.name));
    }
    out.push_str("</svg>\n");
    out
}

pub fn svg_scatter(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)]) -> String {
    let mut out = header(title);
    let (xl, xh) = extent(points.iter().map(|p| p.0));
    let (yl, yh) = extent(points.iter().map(|p| p.1));
    let (xa, ya) = (x_axis(xl, xh), y_axis(yl, yh));
    frame(&mut out, xa, ya, x_label, y_label);
    for &(x, y) in points {
        let _ = writeln!(out, "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"2\" fill=\"steelblue\" fill-opacity=\"0.6\"/>", xa.px(x), ya.px(y));
    }
    out.push_str("</svg>\n");
    out
}

/// Square matrix with a leading label column.
pub fn matrix_csv(labels: &[String], m: &Matrix<f64>) -> String {
    let mut out = format!("column,{}\n", labels.join(","));
    for (i, l) in labels.iter().enumerate() {
        let row: Vec<String> = m.row(i).iter().map(f64::to_string).collect();
        let _ = writeln!(out, "{l},{}", row.join(","));
    }
    out
}

pub fn histogram_csv(h: &Histogram) -> String {
    let mut out = String::from("lower,upper,count\n");
    for (k, c) in h.counts.iter().enumerate() {
        let _ = writeln!(out, "{},{},{c}", h.edges[k], h.edges[k + 1]);
    }
    out
}
