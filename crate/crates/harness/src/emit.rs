//! CSV and SVG output of sweep results.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use firmsim::RunStats;

use crate::sweep::SweepResult;
use crate::HarnessError;

pub const AGGREGATE_HEADER: [&str; 12] = [
    "preset",
    "param_values",
    "seed_count",
    "generated",
    "committed_in_time",
    "missed",
    "miss_percent",
    "throughput_tps",
    "mean_response_ms",
    "p95_response_ms",
    "grants_issued",
    "wasted_ms",
];

fn opt(v: Option<f64>, places: usize) -> String {
    v.map(|x| format!("{x:.places$}")).unwrap_or_default()
}

fn metric_fields(s: &RunStats) -> [String; 9] {
    [
        s.generated.to_string(),
        s.committed_in_time.to_string(),
        s.missed.to_string(),
        opt(s.miss_percent().map(|m| m.percent), 4),
        format!("{:.4}", s.throughput()),
        opt(s.mean_response_ms(), 3),
        opt(s.p95_response_ms(), 3),
        s.grants_issued.to_string(),
        format!("{:.3}", s.wasted_service_us as f64 / 1e3),
    ]
}

/// `<dir>/<stem>_detail.csv` next to the aggregate file.
pub fn detail_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
    path.with_file_name(format!("{stem}_detail.csv"))
}

pub fn aggregate_csv(res: &SweepResult) -> Result<Vec<u8>, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(AGGREGATE_HEADER)?;
    for a in &res.aggregate {
        let mut row = vec![res.preset.clone(), a.param_values.clone(), a.seed_count.to_string()];
        row.extend(metric_fields(&a.stats));
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| HarnessError::Output(e.to_string()))
}

pub fn detail_csv(res: &SweepResult) -> Result<Vec<u8>, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = AGGREGATE_HEADER.to_vec();
    header.push("seed");
    w.write_record(&header)?;
    for d in &res.detail {
        let mut row = vec![res.preset.clone(), d.param_values.clone(), "1".to_string()];
        row.extend(metric_fields(&d.stats));
        row.push(d.seed.to_string());
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| HarnessError::Output(e.to_string()))
}

/// Writes the aggregate rows to `path` and the per-seed rows beside it.
pub fn write_csv(res: &SweepResult, path: &Path) -> Result<(), HarnessError> {
    if res.aggregate.is_empty() {
        return Err(HarnessError::Output("no results to write".into()));
    }
    std::fs::write(path, aggregate_csv(res)?).map_err(|e| HarnessError::io(path, e))?;
    let detail = detail_path(path);
    std::fs::write(&detail, detail_csv(res)?).map_err(|e| HarnessError::io(&detail, e))
}

fn split_label(label: &str, x_key: &str) -> Option<(f64, String)> {
    let mut x = None;
    let mut rest = Vec::new();
    for tok in label.split(';').filter(|t| !t.is_empty()) {
        match tok.split_once('=') {
            Some((k, v)) if k == x_key => x = v.parse::<f64>().ok(),
            _ => rest.push(tok),
        }
    }
    Some((x?, rest.join(";")))
}

/// Line plot of miss percent against `x_key`, one series per remaining
/// combination of parameters. Points whose label lacks a numeric `x_key`
/// are skipped.
pub fn svg_plot(res: &SweepResult, x_key: &str) -> Result<String, HarnessError> {
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for a in &res.aggregate {
        if let (Some((x, name)), Some(m)) = (split_label(&a.param_values, x_key), a.stats.miss_percent()) {
            series.entry(name).or_default().push((x, m.percent));
        }
    }
    if series.is_empty() {
        return Err(HarnessError::Output(format!("no numeric `{x_key}` values to plot")));
    }
    for pts in series.values_mut() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let xs = series.values().flatten().map(|p| p.0);
    let (x_lo, x_hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    let span = if x_hi > x_lo { x_hi - x_lo } else { 1.0 };

    let (w, h, left, right, top, bottom) = (640.0, 400.0, 60.0, 180.0, 20.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let px = |x: f64| left + (x - x_lo) / span * pw;
    let py = |y: f64| top + (100.0 - y) / 100.0 * ph;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{left},{top} V{} H{}" fill="none" stroke="black"/>"#,
        top + ph,
        left + pw
    );
    for tick in [0.0, 25.0, 50.0, 75.0, 100.0] {
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{tick}</text>"#, left - 6.0, py(tick) + 4.0);
    }
    let mut x_ticks: Vec<f64> = series.values().flatten().map(|p| p.0).collect();
    x_ticks.sort_by(f64::total_cmp);
    x_ticks.dedup();
    for x in x_ticks {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{x}</text>"#, px(x), top + ph + 16.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{x_key}</text>"#, left + pw / 2.0, h - 10.0);
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">MissPercent</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let d: Vec<String> = pts.iter().map(|(x, y)| format!("{:.1},{:.1}", px(*x), py(*y))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, d.join(" "));
        for (x, y) in pts {
            let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, px(*x), py(*y));
        }
        let label = if name.is_empty() { res.preset.as_str() } else { name.as_str() };
        let ly = top + 14.0 + 16.0 * i as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{ly}" fill="{color}">{}</text>"#, left + pw + 10.0, escape(label));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn write_svg(res: &SweepResult, x_key: &str, path: &Path) -> Result<(), HarnessError> {
    let svg = svg_plot(res, x_key)?;
    std::fs::write(path, svg).map_err(|e| HarnessError::io(path, e))
}
