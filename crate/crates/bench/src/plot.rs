//! Line charts with min/max bands, written as standalone SVG.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::record::{read_csv, SweepRecord};
use crate::BenchError;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 78.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 52.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Mean with min/max over the records sharing one x value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub x: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<Summary>,
}

#[derive(Debug, Clone)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
}

/// Groups `records` by `key` and summarizes `value` within each group.
pub fn summarize<K: Ord + Copy>(
    records: &[SweepRecord],
    key: impl Fn(&SweepRecord) -> K,
    x: impl Fn(K, &[&SweepRecord]) -> f64,
    value: impl Fn(&SweepRecord) -> f64,
) -> Vec<Summary> {
    let mut groups: BTreeMap<K, Vec<&SweepRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(key(r)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(k, rs)| {
            let vals: Vec<f64> = rs.iter().map(|r| value(r)).collect();
            Summary {
                x: x(k, &rs),
                mean: vals.iter().sum::<f64>() / vals.len() as f64,
                min: vals.iter().copied().fold(f64::INFINITY, f64::min),
                max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect()
}

fn mean_lambda2(rs: &[&SweepRecord]) -> f64 {
    rs.iter().map(|r| r.lambda2).sum::<f64>() / rs.len() as f64
}

fn by_walls(records: &[SweepRecord], value: impl Fn(&SweepRecord) -> f64) -> Vec<Summary> {
    summarize(records, |r| r.w, |w, _| w as f64, value)
}

/// Sorted by mean λ₂ so the curve reads left to right.
fn by_lambda2(records: &[SweepRecord], value: impl Fn(&SweepRecord) -> f64) -> Vec<Summary> {
    let mut pts = summarize(records, |r| r.w, |_, rs| mean_lambda2(rs), value);
    pts.sort_by(|a, b| a.x.total_cmp(&b.x));
    pts
}

/// The five standard figures for a results file.
pub fn standard_charts(records: &[SweepRecord]) -> Vec<(&'static str, Chart)> {
    let series = |label: &str, points| Series {
        label: label.into(),
        points,
    };
    vec![
        (
            "err_vs_walls.svg",
            Chart {
                title: "Approximation error vs. walls".into(),
                x_label: "walls w".into(),
                y_label: "‖v − v̂‖_Φ".into(),
                log_y: false,
                series: vec![
                    series("exact eigenvectors", by_walls(records, |r| r.err_exact)),
                    series("GDO features", by_walls(records, |r| r.err_gdo)),
                ],
            },
        ),
        (
            "lambda2_vs_walls.svg",
            Chart {
                title: "Spectral gap vs. walls".into(),
                x_label: "walls w".into(),
                y_label: "λ₂ (log)".into(),
                log_y: true,
                series: vec![series("λ₂", by_walls(records, |r| r.lambda2))],
            },
        ),
        (
            "err_vs_k.svg",
            Chart {
                title: "Approximation error vs. k".into(),
                x_label: "k".into(),
                y_label: "‖v − v̂‖_Φ (log)".into(),
                log_y: true,
                series: vec![
                    series("exact eigenvectors", summarize(records, |r| r.k, |k, _| k as f64, |r| r.err_exact)),
                    series("GDO features", summarize(records, |r| r.k, |k, _| k as f64, |r| r.err_gdo)),
                ],
            },
        ),
        (
            "err_gdo_vs_lambda2.svg",
            Chart {
                title: "GDO error vs. spectral gap".into(),
                x_label: "mean λ₂".into(),
                y_label: "‖v − v̂‖_Φ".into(),
                log_y: false,
                series: vec![series("GDO features", by_lambda2(records, |r| r.err_gdo))],
            },
        ),
        (
            "err_exact_vs_lambda2.svg",
            Chart {
                title: "Exact-basis error vs. spectral gap".into(),
                x_label: "mean λ₂".into(),
                y_label: "‖v − v_k‖_Φ".into(),
                log_y: false,
                series: vec![series("exact eigenvectors", by_lambda2(records, |r| r.err_exact))],
            },
        ),
    ]
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn nice_ticks(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let raw = (hi - lo) / count as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut ticks = Vec::new();
    while t <= hi + 1e-9 * step {
        ticks.push(t);
        t += step;
    }
    ticks
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

impl Chart {
    /// Renders the chart. Non-positive values are dropped on a log axis.
    pub fn to_svg(&self) -> String {
        let ty = |v: f64| if self.log_y { v.log10() } else { v };
        let usable = |v: f64| v.is_finite() && (!self.log_y || v > 0.0);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for s in &self.series {
            for p in &s.points {
                if p.x.is_finite() {
                    xs.push(p.x);
                }
                for v in [p.mean, p.min, p.max] {
                    if usable(v) {
                        ys.push(ty(v));
                    }
                }
            }
        }
        let range = |v: &[f64]| {
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            match (lo.is_finite(), hi > lo) {
                (false, _) => (0.0, 1.0),
                (true, true) => (lo, hi),
                (true, false) => (lo - 0.5, lo + 0.5),
            }
        };
        let (x0, x1) = range(&xs);
        let (y0, y1) = range(&ys);
        let pw = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        let ph = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let px = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * pw;
        let py = |y: f64| MARGIN_TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            svg,
            r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for t in nice_ticks(x0, x1, 6) {
            let x = px(t);
            let _ = writeln!(
                svg,
                r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                MARGIN_TOP + ph,
                MARGIN_TOP + ph + 5.0,
                MARGIN_TOP + ph + 18.0,
                fmt_tick(t)
            );
        }
        let y_ticks = if self.log_y {
            let ticks: Vec<f64> = (y0.floor() as i32..=y1.ceil() as i32)
                .map(f64::from)
                .filter(|t| *t >= y0 - 1e-9 && *t <= y1 + 1e-9)
                .collect();
            if ticks.len() >= 2 {
                ticks
            } else {
                nice_ticks(y0, y1, 5)
            }
        } else {
            nice_ticks(y0, y1, 5)
        };
        for t in y_ticks {
            let y = py(t);
            let label = if self.log_y { fmt_tick(10f64.powf(t)) } else { fmt_tick(t) };
            let _ = writeln!(
                svg,
                r#"<line x1="{:.2}" y1="{y:.2}" x2="{MARGIN_LEFT}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                MARGIN_LEFT - 5.0,
                MARGIN_LEFT - 8.0,
                y + 4.0,
                label
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            MARGIN_LEFT + pw / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            MARGIN_TOP + ph / 2.0,
            MARGIN_TOP + ph / 2.0,
            escape(&self.y_label)
        );

        for (i, s) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let pts: Vec<&Summary> = s
                .points
                .iter()
                .filter(|p| p.x.is_finite() && usable(p.mean) && usable(p.min) && usable(p.max))
                .collect();
            if pts.len() > 1 {
                let mut band = String::new();
                for p in &pts {
                    let _ = write!(band, "{:.2},{:.2} ", px(p.x), py(ty(p.max)));
                }
                for p in pts.iter().rev() {
                    let _ = write!(band, "{:.2},{:.2} ", px(p.x), py(ty(p.min)));
                }
                let _ = writeln!(
                    svg,
                    r#"<polygon points="{}" fill="{color}" fill-opacity="0.18" stroke="none"/>"#,
                    band.trim_end()
                );
                let line: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", px(p.x), py(ty(p.mean)))).collect();
                let _ = writeln!(
                    svg,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#,
                    line.join(" ")
                );
            }
            for p in &pts {
                let _ = writeln!(
                    svg,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#,
                    px(p.x),
                    py(ty(p.mean))
                );
            }
            let ly = MARGIN_TOP + 16.0 + 16.0 * i as f64;
            let lx = MARGIN_LEFT + pw - 170.0;
            let _ = writeln!(
                svg,
                r#"<line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{ly:.2}">{}</text>"#,
                ly - 4.0,
                lx + 20.0,
                ly - 4.0,
                lx + 26.0,
                escape(&s.label)
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

/// Reads a results CSV and writes the five standard figures into `out_dir`.
pub fn render_plots(csv_path: &Path, out_dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    let records = read_csv(csv_path)?;
    if records.is_empty() {
        return Err(BenchError::Schema(format!("{} has no records", csv_path.display())));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for (name, chart) in standard_charts(&records) {
        let path = out_dir.join(name);
        std::fs::write(&path, chart.to_svg())?;
        written.push(path);
    }
    Ok(written)
}
