//! Static SVG 1.1 plots of trajectories. Output bytes depend only on the
//! input data.

use std::fmt::Write as _;

use crate::csv::CsvTrajectory;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const PLOT_H: f64 = 320.0;
const BAND_GAP: f64 = 14.0;
const BAND_H: f64 = 22.0;
/// Points per curve before decimation kicks in.
const MAX_POINTS: usize = 4000;

const LINE_COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];
const BAND_COLORS: [&str; 6] = ["#c6dbef", "#fdd0a2", "#c7e9c0", "#dadaeb", "#fcbba1", "#d9d9d9"];

fn fmt(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

/// Maximal runs `(t0, t1, sigma)` of constant mode.
fn sigma_runs(traj: &CsvTrajectory) -> Vec<(f64, f64, usize)> {
    let mut runs: Vec<(f64, f64, usize)> = Vec::new();
    for (k, (&t, &s)) in traj.times.iter().zip(&traj.sigma).enumerate() {
        let end = traj.times.get(k + 1).copied().unwrap_or(t);
        match runs.last_mut() {
            Some(r) if r.2 == s => r.1 = end,
            _ => runs.push((t, end, s)),
        }
    }
    runs
}

pub fn render(traj: &CsvTrajectory, title: &str) -> String {
    let n = traj.dim();
    let t0 = traj.times[0];
    let t1 = *traj.times.last().expect("non-empty trajectory");
    let span = if t1 > t0 { t1 - t0 } else { 1.0 };
    let ymax = traj.states.iter().flatten().fold(0.0f64, |a, &v| a.max(v));
    let ymin = traj.states.iter().flatten().fold(0.0f64, |a, &v| a.min(v));
    let (ylo, yhi) = if ymax > ymin { (ymin, ymax) } else { (ymin, ymin + 1.0) };
    let plot_w = WIDTH - LEFT - RIGHT;
    let px = |t: f64| LEFT + (t - t0) / span * plot_w;
    let py = |y: f64| TOP + PLOT_H - (y - ylo) / (yhi - ylo) * PLOT_H;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        WIDTH, HEIGHT, WIDTH, HEIGHT
    );
    let _ = writeln!(s, r#"<title>{}</title>"#, escape(title));
    let _ = writeln!(s, r##"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##);
    let _ = writeln!(s, r##"<rect x="{LEFT}" y="{TOP}" width="{}" height="{PLOT_H}" fill="none" stroke="#333333" stroke-width="1"/>"##, fmt(plot_w));

    // Axis ticks.
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let y = ylo + f * (yhi - ylo);
        let t = t0 + f * span;
        let _ = writeln!(
            s,
            r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#dddddd" stroke-width="0.5"/>"##,
            LEFT,
            fmt(py(y)),
            fmt(LEFT + plot_w),
            fmt(py(y))
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{:.3}</text>"#, fmt(LEFT - 6.0), fmt(py(y) + 4.0), y);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" text-anchor="middle">{:.3}</text>"#,
            fmt(px(t)),
            fmt(TOP + PLOT_H + BAND_GAP + BAND_H + 16.0),
            t
        );
    }

    // Active mode band.
    let band_y = TOP + PLOT_H + BAND_GAP;
    let _ = writeln!(s, r#"<g id="sigma-band">"#);
    for (a, b, m) in sigma_runs(traj) {
        let x0 = px(a);
        let w = (px(b) - x0).max(0.5);
        let color = BAND_COLORS[(m - 1) % BAND_COLORS.len()];
        let _ = writeln!(s, r#"<rect x="{}" y="{}" width="{}" height="{BAND_H}" fill="{color}"/>"#, fmt(x0), fmt(band_y), fmt(w));
        if w >= 18.0 {
            let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10" text-anchor="middle">{m}</text>"#, fmt(x0 + w / 2.0), fmt(band_y + 15.0));
        }
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="11" text-anchor="end">σ</text>"#, fmt(LEFT - 6.0), fmt(band_y + 15.0));

    // Curves.
    let stride = traj.times.len().div_ceil(MAX_POINTS).max(1);
    let last = traj.times.len() - 1;
    for i in 0..n {
        let color = LINE_COLORS[i % LINE_COLORS.len()];
        let mut pts = String::new();
        for k in (0..=last).step_by(stride).chain((!last.is_multiple_of(stride)).then_some(last)) {
            if !pts.is_empty() {
                pts.push(' ');
            }
            let _ = write!(pts, "{},{}", fmt(px(traj.times[k])), fmt(py(traj.states[k][i])));
        }
        let _ = writeln!(s, r#"<polyline id="x{}" fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>"#, i + 1);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" fill="{color}">x{}</text>"#,
            fmt(LEFT + 8.0 + 36.0 * i as f64),
            fmt(TOP - 10.0),
            i + 1
        );
    }
    let _ = writeln!(s, "</svg>");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
