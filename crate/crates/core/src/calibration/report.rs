//! Text and record renderings of operating tables.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::Serialize;

use super::{OperatingPoint, SelectionMode};
use crate::ratio::Multiplier;
use crate::types::Source;

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub label: String,
    pub point: OperatingPoint,
}

/// Machine-readable form of one report row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatingRecord {
    pub label: String,
    pub threshold: f64,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub volume: u64,
    pub sources: BTreeMap<Source, u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vs_baseline: Option<Multiplier>,
}

impl OperatingRecord {
    pub fn new(row: &ReportRow, baseline_weekly: Option<u64>) -> Self {
        OperatingRecord {
            label: row.label.clone(),
            threshold: row.point.threshold,
            recall: row.point.recall,
            precision: row.point.precision,
            volume: row.point.weekly_volume,
            sources: row.point.source_volumes.clone(),
            vs_baseline: baseline_weekly.map(|b| Multiplier::of(b as f64, row.point.weekly_volume as f64)),
        }
    }
}

fn metric(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_owned(), |v| format!("{v:.3}"))
}

fn volume_cell(volume: u64, baseline_weekly: Option<u64>) -> String {
    match baseline_weekly.map(|b| Multiplier::of(b as f64, volume as f64)) {
        Some(Multiplier::Ratio(r)) => format!("{volume} ({r:.1}x)"),
        Some(m @ Multiplier::New) => format!("{volume} ({m})"),
        _ => volume.to_string(),
    }
}

/// Aligned table of options followed by the per-source volume breakdown.
pub fn render_operating_table(rows: &[ReportRow], baseline_weekly: Option<u64>) -> String {
    let mut cells = vec![["option".to_owned(), "threshold".into(), "recall".into(), "precision".into(), "volume".into()]];
    for r in rows {
        cells.push([
            r.label.clone(),
            format!("{:.3}", r.point.threshold),
            metric(r.point.recall),
            metric(r.point.precision),
            volume_cell(r.point.weekly_volume, baseline_weekly),
        ]);
    }
    let mut out = aligned(&cells);
    let sources: Vec<Source> = {
        let mut s: Vec<Source> = rows.iter().flat_map(|r| r.point.source_volumes.keys().copied()).collect();
        s.sort();
        s.dedup();
        s
    };
    if !sources.is_empty() {
        out.push('\n');
        let mut cells = vec![["threshold".to_owned(), "source".into(), "volume".into()]];
        for r in rows {
            for s in &sources {
                let v = r.point.source_volumes.get(s).copied().unwrap_or(0);
                cells.push([format!("{:.3}", r.point.threshold), s.to_string(), v.to_string()]);
            }
        }
        out.push_str(&aligned(&cells));
    }
    out
}

/// One-paragraph summary of a selected operating point.
pub fn render_selection(scope: &str, mode: SelectionMode, point: &OperatingPoint) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{scope} {mode}");
    let _ = writeln!(out, "threshold {:.3}", point.threshold);
    let _ = writeln!(out, "precision {}", metric(point.precision));
    let _ = writeln!(out, "recall {}", metric(point.recall));
    let _ = write!(out, "weekly volume {}", point.weekly_volume);
    if !point.source_volumes.is_empty() {
        let parts: Vec<String> = point.source_volumes.iter().map(|(s, v)| format!("{s} {v}")).collect();
        let _ = write!(out, " ({})", parts.join(", "));
    }
    out.push('\n');
    out
}

pub(crate) fn aligned<const N: usize>(rows: &[[String; N]]) -> String {
    let mut widths = [0usize; N];
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (i, cell) in row.iter().enumerate() {
            if i + 1 == N {
                line.push_str(cell);
            } else {
                let pad = widths[i] - cell.chars().count();
                line.push_str(cell);
                line.extend(std::iter::repeat_n(' ', pad + 2));
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}
