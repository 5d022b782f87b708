//! Writing run artifacts: trace.csv, evals.csv, summary.json, curves.svg
//! and one Q-table dump per seed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::runner::{ExperimentResult, Summary, TraceRow};
use crate::error::{Error, Result};

pub const TRACE_FILE: &str = "trace.csv";
pub const EVALS_FILE: &str = "evals.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CURVES_FILE: &str = "curves.svg";

#[derive(Serialize)]
struct EvalCsvRow {
    seed: u64,
    episode: u64,
    metric: f64,
}

/// Writes every artifact into `dir` (created if missing) and returns the
/// paths written.
pub fn emit_outputs(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let trace_path = dir.join(TRACE_FILE);
    write_trace_csv(result.trace(), &trace_path)?;
    written.push(trace_path);

    let evals_path = dir.join(EVALS_FILE);
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(&evals_path)?;
    w.write_record(["seed", "episode", "metric"])?;
    for e in result.evals() {
        w.serialize(EvalCsvRow {
            seed: e.seed,
            episode: e.episode,
            metric: e.metric,
        })?;
    }
    w.flush().map_err(|e| Error::io(&evals_path, e))?;
    written.push(evals_path);

    let summary_path = dir.join(SUMMARY_FILE);
    let json = serde_json::to_string_pretty(&result.summary)?;
    fs::write(&summary_path, json + "\n").map_err(|e| Error::io(&summary_path, e))?;
    written.push(summary_path);

    let curves_path = dir.join(CURVES_FILE);
    fs::write(&curves_path, render_curves_svg(&result.summary))
        .map_err(|e| Error::io(&curves_path, e))?;
    written.push(curves_path);

    for run in &result.runs {
        let path = dir.join(format!("qtable_seed{}.txt", run.seed));
        run.q_table.save(&path)?;
        written.push(path);
    }
    Ok(written)
}

pub fn write_trace_csv<'a>(
    rows: impl IntoIterator<Item = &'a TraceRow>,
    path: &Path,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut any = false;
    for row in rows {
        w.serialize(row)?;
        any = true;
    }
    if !any {
        w.write_record([
            "seed",
            "worker",
            "episode",
            "step",
            "complexity",
            "noisy_complexity",
            "episode_return",
            "performance",
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        let (x1, y1) = (
            if x1 > x0 { x1 } else { x0 + 1.0 },
            if y1 > y0 { y1 } else { y0 + 1.0 },
        );
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2.0 * MARGIN)
    }

    fn axes(&self, out: &mut String, title: &str, xlabel: &str, ylabel: &str) {
        let (l, r) = (MARGIN, WIDTH - MARGIN);
        let (t, b) = (MARGIN, HEIGHT - MARGIN);
        let _ = writeln!(
            out,
            r##"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
            r - l,
            b - t
        );
        let _ = writeln!(
            out,
            r##"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"##,
            WIDTH / 2.0,
            escape(title)
        );
        let _ = writeln!(
            out,
            r##"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"##,
            WIDTH / 2.0,
            HEIGHT - 12.0,
            escape(xlabel)
        );
        let _ = writeln!(
            out,
            r##"<text x="16" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 16 {})">{}</text>"##,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(ylabel)
        );
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let (xv, yv) = (
                self.x0 + f * (self.x1 - self.x0),
                self.y0 + f * (self.y1 - self.y0),
            );
            let _ = writeln!(
                out,
                r##"<text x="{:.1}" y="{}" text-anchor="middle" font-size="10">{}</text>"##,
                self.px(xv),
                b + 14.0,
                tick(xv)
            );
            let _ = writeln!(
                out,
                r##"<text x="{}" y="{:.1}" text-anchor="end" font-size="10">{}</text>"##,
                l - 4.0,
                self.py(yv) + 3.0,
                tick(yv)
            );
        }
    }

    fn polyline(&self, pts: impl Iterator<Item = (f64, f64)>) -> String {
        pts.map(|(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y)))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 1000.0 || v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn svg_open() -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

/// Mean evaluation curve with its 95% band.
pub fn render_curves_svg(summary: &Summary) -> String {
    let mut out = svg_open();
    let pts = &summary.curve;
    let x1 = pts.last().map_or(1.0, |p| p.progress as f64);
    let y0 = pts
        .iter()
        .map(|p| p.stats.low)
        .fold(f64::INFINITY, f64::min);
    let y1 = pts
        .iter()
        .map(|p| p.stats.high)
        .fold(f64::NEG_INFINITY, f64::max);
    let (y0, y1) = if y0.is_finite() { (y0, y1) } else { (0.0, 1.0) };
    let frame = Frame::new(0.0, x1, y0, y1);
    frame.axes(
        &mut out,
        "Evaluation on the final task",
        "training progress",
        &summary.metric,
    );
    if !pts.is_empty() {
        let upper = pts.iter().map(|p| (p.progress as f64, p.stats.high));
        let lower = pts.iter().rev().map(|p| (p.progress as f64, p.stats.low));
        let _ = writeln!(
            out,
            r##"<polygon points="{}" fill="{}" fill-opacity="0.2" stroke="none"/>"##,
            frame.polyline(upper.chain(lower)),
            PALETTE[0]
        );
        let _ = writeln!(
            out,
            r##"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"##,
            frame.polyline(pts.iter().map(|p| (p.progress as f64, p.stats.mean))),
            PALETTE[0]
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Complexity over environment steps, one line per (seed, worker).
pub fn render_trace_svg(rows: &[TraceRow]) -> String {
    let mut lines: BTreeMap<(u64, usize), Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        lines
            .entry((r.seed, r.worker))
            .or_default()
            .push((r.step as f64, r.complexity));
    }
    let x1 = rows.iter().map(|r| r.step).max().unwrap_or(1) as f64;
    let frame = Frame::new(0.0, x1, 0.0, 1.0);
    let mut out = svg_open();
    frame.axes(
        &mut out,
        "Task complexity per worker",
        "environment steps",
        "complexity",
    );
    for (k, ((seed, worker), pts)) in lines.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let _ = writeln!(
            out,
            r##"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"><title>seed {seed} worker {worker}</title></polyline>"##,
            frame.polyline(pts.iter().copied())
        );
    }
    out.push_str("</svg>\n");
    out
}
