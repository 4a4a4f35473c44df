//! SVG line charts of sweep results.
//!
//! One chart per metric and behavior setting, log-scale y axis, sweep values
//! evenly spaced on x. Marginal estimators draw solid lines, the others
//! dashed. Output depends only on the CSV text.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const METRICS: [&str; 3] = ["mse", "squared_bias", "variance"];

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
struct Record {
    variable: String,
    value: f64,
    estimator: String,
    behavior: String,
    metrics: [f64; 3],
}

fn parse(csv_text: &str) -> Result<Vec<Record>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(csv_text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Ok(Vec::new());
    }
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidArgument(format!("results CSV lacks column '{name}'")))
    };
    let variable = col("sweep_variable")?;
    let value = col("sweep_value")?;
    let estimator = col("estimator")?;
    let behavior = col("behavior")?;
    let metric_cols = [col(METRICS[0])?, col(METRICS[1])?, col(METRICS[2])?];
    let mut out = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            let raw = rec.get(i).unwrap_or("");
            raw.parse::<f64>().map_err(|_| {
                Error::InvalidArgument(format!("row {}: '{raw}' is not a number", line + 1))
            })
        };
        out.push(Record {
            variable: rec.get(variable).unwrap_or("").to_string(),
            value: num(value)?,
            estimator: rec.get(estimator).unwrap_or("").to_string(),
            behavior: rec.get(behavior).unwrap_or("").to_string(),
            metrics: [
                num(metric_cols[0])?,
                num(metric_cols[1])?,
                num(metric_cols[2])?,
            ],
        });
    }
    Ok(out)
}

/// Proposed (marginal) estimators are drawn solid.
pub fn is_proposed(label: &str) -> bool {
    label.strip_prefix("sn").unwrap_or(label).starts_with('M')
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn render(records: &[&Record], metric: usize, behavior: &str) -> String {
    let mut values: Vec<f64> = records.iter().map(|r| r.value).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let mut estimators: Vec<&str> = Vec::new();
    for r in records {
        if !estimators.contains(&r.estimator.as_str()) {
            estimators.push(&r.estimator);
        }
    }
    let logs: Vec<f64> = records
        .iter()
        .map(|r| r.metrics[metric])
        .filter(|v| *v > 0.0 && v.is_finite())
        .map(f64::log10)
        .collect();
    let (mut lo, mut hi) = logs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    if !lo.is_finite() {
        (lo, hi) = (-1.0, 0.0);
    }
    let (lo, hi) = (lo.floor(), hi.ceil().max(lo.floor() + 1.0));
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let x_of = |v: f64| {
        let i = values.iter().position(|&u| u == v).unwrap_or(0);
        if values.len() <= 1 {
            LEFT + plot_w / 2.0
        } else {
            LEFT + plot_w * i as f64 / (values.len() - 1) as f64
        }
    };
    let y_of = |l: f64| TOP + plot_h * (hi - l) / (hi - lo);
    let variable = records
        .first()
        .map_or("sweep value", |r| r.variable.as_str());

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(
        s,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{} ({})</text>"#,
        LEFT + plot_w / 2.0,
        METRICS[metric],
        escape(behavior)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    for decade in (lo as i64)..=(hi as i64) {
        let y = y_of(decade as f64);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
            LEFT + plot_w
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">1e{decade}</text>"#,
            LEFT - 6.0,
            y + 4.0
        );
    }
    for &v in &values {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">{v}</text>"#,
            x_of(v),
            TOP + plot_h + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 12.0,
        escape(variable)
    );
    for (i, est) in estimators.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let dash = if is_proposed(est) {
            ""
        } else {
            r#" stroke-dasharray="6 4""#
        };
        let mut pts: Vec<(f64, f64)> = records
            .iter()
            .filter(|r| {
                r.estimator == *est && r.metrics[metric] > 0.0 && r.metrics[metric].is_finite()
            })
            .map(|r| (x_of(r.value), y_of(r.metrics[metric].log10())))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let points: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            s,
            r#"<polyline data-estimator="{}" fill="none" stroke="{color}" stroke-width="2"{dash} points="{}"/>"#,
            escape(est),
            points.join(" ")
        );
        let ly = TOP + 14.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"{dash}/>"#,
            lx + 24.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11">{}</text>"#,
            lx + 30.0,
            ly + 4.0,
            escape(est)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// `(file name, SVG text)` for every metric and behavior setting in the CSV.
/// An empty table yields one empty chart per metric.
pub fn render_plots(csv_text: &str) -> Result<Vec<(String, String)>> {
    let records = parse(csv_text)?;
    let mut by_behavior: BTreeMap<&str, Vec<&Record>> = BTreeMap::new();
    for r in &records {
        by_behavior.entry(r.behavior.as_str()).or_default().push(r);
    }
    if by_behavior.is_empty() {
        by_behavior.insert("none", Vec::new());
    }
    let mut out = Vec::new();
    for (behavior, recs) in &by_behavior {
        for (m, name) in METRICS.iter().enumerate() {
            out.push((format!("{name}_{behavior}.svg"), render(recs, m, behavior)));
        }
    }
    Ok(out)
}

/// Writes [`render_plots`] of the CSV file into `out_dir`.
pub fn emit_plots(results_csv: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let text = std::fs::read_to_string(results_csv)?;
    std::fs::create_dir_all(out_dir)?;
    render_plots(&text)?
        .into_iter()
        .map(|(name, svg)| {
            let path = out_dir.join(name);
            std::fs::write(&path, svg)?;
            Ok(path)
        })
        .collect()
}
