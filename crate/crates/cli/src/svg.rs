//! Static SVG plots, written by hand so output is deterministic.

use std::fmt::Write as _;

use grbm_core::{Dataset, GrbmParams};

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22",
    "#17becf",
];

pub fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 32.0;
const BOTTOM: f64 = 48.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tick_label(v: f64) -> String {
    let s = format!("{:.6}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// Axis range widened to whole multiples of a 1/2/5 step, and the step.
fn nice_axis(lo: f64, hi: f64) -> (f64, f64, f64) {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|&s| s >= raw)
        .unwrap_or(10.0 * mag);
    ((lo / step).floor() * step, (hi / step).ceil() * step, step)
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

fn header(out: &mut String, width: f64, height: f64, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
        width / 2.0,
        escape(title)
    );
}

/// Line chart of one or more series sharing both axes.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (x0, x1) = span(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = span(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let (x0, x1, xstep) = nice_axis(x0, x1);
    let (y0, y1, ystep) = nice_axis(y0, y1);
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut out = String::new();
    header(&mut out, W, H, title);
    let _ = writeln!(
        out,
        r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##
    );
    let ticks = |lo: f64, hi: f64, step: f64| {
        let n = ((hi - lo) / step).round() as usize;
        (0..=n).map(move |k| lo + step * k as f64)
    };
    for fx in ticks(x0, x1, xstep) {
        let _ = writeln!(
            out,
            r##"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
            sx(fx),
            TOP + ph + 16.0,
            tick_label(fx)
        );
    }
    for fy in ticks(y0, y1, ystep) {
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="#ddd"/>"##,
            LEFT + pw,
            sy(fy),
            sy(fy)
        );
        let _ = writeln!(
            out,
            r##"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            LEFT - 6.0,
            sy(fy) + 4.0,
            tick_label(fy)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        H - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(y_label)
    );
    for (i, s) in series.iter().enumerate() {
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            color(i),
            pts.join(" ")
        );
        let ly = TOP + 12.0 + 16.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" x2="{:.1}" y1="{ly:.1}" y2="{ly:.1}" stroke="{}" stroke-width="2"/>"#,
            W - RIGHT + 12.0,
            W - RIGHT + 32.0,
            color(i)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
            W - RIGHT + 38.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// 2-D data coloured by component, filters drawn as arrows from the visible
/// bias, and the line where each hidden unit is on with probability 0.5.
pub fn toy_snapshot(title: &str, data: &Dataset, params: &GrbmParams) -> String {
    const SIDE: f64 = 480.0;
    const MARGIN: f64 = 36.0;
    let xs = data.rows.column(0);
    let ys = data.rows.column(1);
    let b = params.visible_bias();
    let w = params.weights();
    let (ax0, ax1) = span(xs.iter().copied().chain(w.rows().into_iter().map(|r| b[0] + r[0])));
    let (ay0, ay1) = span(ys.iter().copied().chain(w.rows().into_iter().map(|r| b[1] + r[1])));
    let half = 0.55 * (ax1 - ax0).max(ay1 - ay0);
    let (cx, cy) = (0.5 * (ax0 + ax1), 0.5 * (ay0 + ay1));
    let (x0, y0) = (cx - half, cy - half);
    let scale = (SIDE - 2.0 * MARGIN) / (2.0 * half);
    let sx = |x: f64| MARGIN + (x - x0) * scale;
    let sy = |y: f64| SIDE - MARGIN - (y - y0) * scale;

    let mut out = String::new();
    header(&mut out, SIDE, SIDE, title);
    let _ = writeln!(
        out,
        r##"<defs><clipPath id="plot"><rect x="{MARGIN}" y="{MARGIN}" width="{0}" height="{0}"/></clipPath><marker id="head" viewBox="0 0 10 10" refX="9" refY="5" markerWidth="7" markerHeight="7" orient="auto"><path d="M0,0 L10,5 L0,10 z" fill="#000"/></marker></defs>"##,
        SIDE - 2.0 * MARGIN
    );
    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{0}" height="{0}" fill="none" stroke="#333"/>"##,
        SIDE - 2.0 * MARGIN
    );
    out.push_str(r#"<g clip-path="url(#plot)">"#);
    out.push('\n');
    let labels = data.labels.clone().unwrap_or_else(|| vec![0; data.len()]);
    for (k, row) in data.rows.rows().into_iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="1.6" fill="{}" fill-opacity="0.6"/>"#,
            sx(row[0]),
            sy(row[1]),
            color(labels[k] as usize)
        );
    }
    let sigma = params.sigma();
    let a = params.hidden_bias();
    let reach = 4.0 * half;
    for (i, wi) in w.rows().into_iter().enumerate() {
        // a_i + Σ_j w_ij v_j / σ_j² = 0
        let n = [wi[0] / (sigma[0] * sigma[0]), wi[1] / (sigma[1] * sigma[1])];
        let nn = n[0] * n[0] + n[1] * n[1];
        if nn > 1e-24 {
            let p = [-a[i] * n[0] / nn, -a[i] * n[1] / nn];
            let d = [-n[1] / nn.sqrt(), n[0] / nn.sqrt()];
            let _ = writeln!(
                out,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{}" stroke-width="1.2" stroke-dasharray="5 3"/>"#,
                sx(p[0] - reach * d[0]),
                sy(p[1] - reach * d[1]),
                sx(p[0] + reach * d[0]),
                sy(p[1] + reach * d[1]),
                color(4 + i)
            );
        }
    }
    out.push_str("</g>\n");
    for (i, wi) in w.rows().into_iter().enumerate() {
        let (tx, ty) = (b[0] + wi[0], b[1] + wi[1]);
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{}" stroke-width="2" marker-end="url(#head)"/>"#,
            sx(b[0]),
            sy(b[1]),
            sx(tx),
            sy(ty),
            color(4 + i)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" fill="{}">h{i}</text>"#,
            sx(tx) + 4.0,
            sy(ty) - 4.0,
            color(4 + i)
        );
    }
    out.push_str("</svg>\n");
    out
}
