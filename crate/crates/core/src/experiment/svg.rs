use std::fmt::Write as _;

use crate::error::ExperimentError;
use crate::experiment::metrics::MetricsRecord;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Residual,
    FeasibilityGap,
    Dispersion,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Residual => "residual",
            Metric::FeasibilityGap => "feasibility_gap",
            Metric::Dispersion => "dispersion",
        }
    }

    fn of(&self, r: &MetricsRecord) -> f64 {
        match self {
            Metric::Residual => r.residual,
            Metric::FeasibilityGap => r.feasibility_gap,
            Metric::Dispersion => r.dispersion,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SvgOptions {
    pub log_y: bool,
    pub title: String,
    pub which: Metric,
}

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 520.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 220.0;
const TOP: f64 = 48.0;
const BOTTOM: f64 = 56.0;
const MAX_POINTS: usize = 2000;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{}", (v * 1000.0).round() / 1000.0)
    }
}

/// Groups records by label in first-appearance order, keeping finite points.
fn group(records: &[MetricsRecord], which: Metric) -> Vec<(String, Vec<(f64, f64)>)> {
    let mut out: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for r in records {
        let y = which.of(r);
        let idx = match out.iter().position(|(l, _)| *l == r.method_label) {
            Some(i) => i,
            None => {
                out.push((r.method_label.clone(), Vec::new()));
                out.len() - 1
            }
        };
        if y.is_finite() && r.time.is_finite() {
            out[idx].1.push((r.time, y));
        }
    }
    out
}

fn thin(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    if points.len() <= MAX_POINTS {
        return points.to_vec();
    }
    let stride = points.len().div_ceil(MAX_POINTS);
    let mut out: Vec<(f64, f64)> = points.iter().step_by(stride).copied().collect();
    if out.last() != points.last() {
        out.push(*points.last().unwrap());
    }
    out
}

/// Line chart with one polyline per method. Under `log_y`, values `<= 0` are
/// drawn at the smallest positive value present and the legend says so.
pub fn render_svg(records: &[MetricsRecord], options: &SvgOptions) -> Result<String, ExperimentError> {
    if records.is_empty() {
        return Err(ExperimentError::EmptySeries);
    }
    let series = group(records, options.which);
    let all: Vec<(f64, f64)> = series.iter().flat_map(|(_, p)| p.iter().copied()).collect();

    let mut clamp_note = None;
    let floor = if options.log_y {
        let min_pos = all.iter().map(|p| p.1).filter(|&y| y > 0.0).fold(f64::INFINITY, f64::min);
        let floor = if min_pos.is_finite() { min_pos } else { 1.0 };
        if all.iter().any(|p| p.1 <= 0.0) {
            clamp_note = Some(format!("values <= 0 drawn at {floor:.3e}"));
        }
        floor
    } else {
        0.0
    };
    let ty = |y: f64| if options.log_y { y.max(floor).log10() } else { y };

    let (mut x0, mut x1) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
    let (mut y0, mut y1) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(ty(p.1)), hi.max(ty(p.1))));
    if !x0.is_finite() {
        (x0, x1) = (0.0, 1.0);
    }
    if !y0.is_finite() {
        (y0, y1) = (0.0, 1.0);
    }
    if x1 - x0 <= 0.0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 <= 0.0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    if options.log_y {
        y0 = y0.floor();
        y1 = y1.ceil();
    }

    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + pw / 2.0,
        escape(&options.title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );

    for i in 0..=5 {
        let xv = x0 + (x1 - x0) * i as f64 / 5.0;
        let px = sx(xv);
        let _ = writeln!(
            s,
            r##"<line x1="{px:.2}" y1="{TOP}" x2="{px:.2}" y2="{:.2}" stroke="#dddddd"/>"##,
            TOP + ph
        );
        let _ = writeln!(
            s,
            r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + ph + 18.0,
            tick_label(xv)
        );
    }
    let y_ticks: Vec<f64> = if options.log_y {
        let span = (y1 - y0) as i64;
        let every = (span / 8).max(1);
        (0..=span).step_by(every as usize).map(|d| y0 + d as f64).collect()
    } else {
        (0..=5).map(|i| y0 + (y1 - y0) * i as f64 / 5.0).collect()
    };
    for yv in y_ticks {
        let py = sy(yv);
        let label = if options.log_y { format!("1e{}", yv as i64) } else { tick_label(yv) };
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#dddddd"/>"##,
            LEFT + pw
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#,
            LEFT - 6.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">time</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        options.which.name(),
        if options.log_y { " (log scale)" } else { "" }
    );

    for (k, (label, points)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = thin(points)
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(ty(y))))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = TOP + 10.0 + 20.0 * k as f64;
        let lx = LEFT + pw + 14.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 22.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 28.0,
            ly + 4.0,
            escape(label)
        );
    }
    if let Some(note) = clamp_note {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="10">{}</text>"#,
            LEFT + pw + 14.0,
            TOP + 10.0 + 20.0 * series.len() as f64 + 6.0,
            escape(&note)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}
