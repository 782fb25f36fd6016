//! CSV, SVG and JSON artifacts of a run.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{RunRecord, RunRow};
use crate::error::{Error, Result};
use crate::metrics::MetricKind;

#[derive(Serialize)]
struct CsvRow {
    step: usize,
    metric: MetricKind,
    distance: f64,
    bound: f64,
    evidence_p: f64,
    evidence_q: f64,
}

fn io(e: impl std::fmt::Display) -> Error {
    Error::Io(e.to_string())
}

/// CSV text for one group of rows: header, LF line endings, floats in
/// shortest round-trip form.
pub fn csv_string(rows: &[&RunRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::InvalidParameter("nothing to emit".into()));
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    for r in rows {
        w.serialize(CsvRow {
            step: r.step,
            metric: r.metric,
            distance: r.distance,
            bound: r.bound,
            evidence_p: r.evidence_p,
            evidence_q: r.evidence_q,
        })
        .map_err(io)?;
    }
    String::from_utf8(w.into_inner().map_err(io)?).map_err(io)
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 60.0;

/// Line chart of distance and bound against step on a log-scale y axis.
/// Nonpositive and non-finite values are left out of the polylines.
pub fn svg_string(title: &str, rows: &[&RunRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::InvalidParameter("nothing to emit".into()));
    }
    let positive = |v: f64| v > 0.0 && v.is_finite();
    let logs: Vec<f64> =
        rows.iter().flat_map(|r| [r.distance, r.bound]).filter(|v| positive(*v)).map(f64::log10).collect();
    let (mut lo, mut hi) = logs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    if logs.is_empty() {
        (lo, hi) = (-1.0, 0.0);
    }
    lo = lo.floor();
    hi = hi.ceil().max(lo + 1.0);
    let max_step = rows.iter().map(|r| r.step).max().unwrap_or(1).max(2) as f64;
    let px = |step: usize| MARGIN + (step as f64 - 1.0) / (max_step - 1.0) * (W - 2.0 * MARGIN);
    let py = |v: f64| H - MARGIN - (v.log10() - lo) / (hi - lo) * (H - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let (x0, x1, y0, y1) = (MARGIN, W - MARGIN, H - MARGIN, MARGIN);
    let _ = writeln!(s, r#"<path d="M{x0} {y1} L{x0} {y0} L{x1} {y0}" stroke="black" fill="none"/>"#);
    for e in (lo as i64)..=(hi as i64) {
        let y = py(10f64.powi(e as i32));
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{y}" x2="{x0}" y2="{y}" stroke="black"/><text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="11">1e{e}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            y + 4.0
        );
    }
    for step in rows.iter().map(|r| r.step) {
        let _ = writeln!(s, r#"<line x1="{0}" y1="{y0}" x2="{0}" y2="{1}" stroke="black"/>"#, px(step), y0 + 4.0);
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">step</text>"#,
        W / 2.0,
        H - 20.0
    );
    for (name, colour, pick) in [
        ("distance", "#1f77b4", (|r: &RunRow| r.distance) as fn(&RunRow) -> f64),
        ("bound", "#d62728", |r: &RunRow| r.bound),
    ] {
        let pts: Vec<String> = rows
            .iter()
            .filter(|r| positive(pick(r)))
            .map(|r| format!("{:.2},{:.2}", px(r.step), py(pick(r))))
            .collect();
        if !pts.is_empty() {
            let _ = writeln!(s, r#"<polyline points="{}" stroke="{colour}" stroke-width="2" fill="none"/>"#, pts.join(" "));
        }
        let ly = if name == "distance" { 44.0 } else { 60.0 };
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/><text x="{}" y="{}" font-family="sans-serif" font-size="11">{name}</text>"#,
            x1 - 90.0,
            x1 - 70.0,
            x1 - 65.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let text = serde_json::to_string_pretty(value).map_err(io)?;
    write(path, &(text + "\n"))
}

/// `{series}_{metric}.csv` per group.
pub fn write_csv(record: &RunRecord, dir: &Path) -> Result<Vec<PathBuf>> {
    emit_groups(record, dir, "csv", |_, rows| csv_string(rows))
}

/// `{series}_{metric}.svg` per group.
pub fn write_svg(record: &RunRecord, dir: &Path) -> Result<Vec<PathBuf>> {
    emit_groups(record, dir, "svg", svg_string)
}

fn emit_groups(
    record: &RunRecord,
    dir: &Path,
    ext: &str,
    render: impl Fn(&str, &[&RunRow]) -> Result<String>,
) -> Result<Vec<PathBuf>> {
    let groups = record.groups();
    if groups.is_empty() {
        return Err(Error::InvalidParameter("run record has no rows".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let mut paths = Vec::new();
    for ((series, metric), rows) in groups {
        let path = dir.join(format!("{series}_{metric}.{ext}"));
        write(&path, &render(&format!("{} {series} {metric}", record.experiment), &rows)?)?;
        paths.push(path);
    }
    Ok(paths)
}

/// CSV and SVG per group plus `metadata.json`.
pub fn write_all(record: &RunRecord, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = write_csv(record, dir)?;
    paths.extend(write_svg(record, dir)?);
    let meta = dir.join("metadata.json");
    write_json(
        &serde_json::json!({
            "experiment": record.experiment,
            "violations": record.violations,
            "rows": record.rows.len(),
            "metadata": record.metadata,
        }),
        &meta,
    )?;
    paths.push(meta);
    Ok(paths)
}
