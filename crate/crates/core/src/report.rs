//! CSV and JSON output for sweep records.
//!
//! Columns: `protocol, schedule, knockout, cutoff_or_window_end,
//! layer_ratio, score, performance_ratio, delta, logit_drift, flops_ratio`,
//! then the `_pct` renderings of the three ratios at one decimal. Missing
//! values are empty in CSV and `null` in JSON. Numbers are written at full
//! precision.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{KnockoutError, Result};
use crate::sweep::SweepRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = KnockoutError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(KnockoutError::Usage(format!("unknown format {other:?}; use csv or json"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ReportRow {
    protocol: String,
    schedule: String,
    knockout: String,
    cutoff_or_window_end: Option<usize>,
    layer_ratio: f64,
    score: Option<f64>,
    performance_ratio: Option<f64>,
    delta: Option<f64>,
    logit_drift: f64,
    flops_ratio: f64,
    layer_ratio_pct: String,
    performance_ratio_pct: Option<String>,
    flops_ratio_pct: String,
}

impl From<&SweepRecord> for ReportRow {
    fn from(r: &SweepRecord) -> Self {
        ReportRow {
            protocol: r.protocol.clone(),
            schedule: r.schedule.clone(),
            knockout: r.knockout.clone(),
            cutoff_or_window_end: r.cutoff_or_window_end,
            layer_ratio: r.layer_ratio,
            score: r.score,
            performance_ratio: r.performance_ratio,
            delta: r.delta,
            logit_drift: r.logit_drift,
            flops_ratio: r.flops_ratio,
            layer_ratio_pct: format!("{:.1}", 100.0 * r.layer_ratio),
            performance_ratio_pct: r.performance_ratio.map(|p| format!("{p:.1}")),
            flops_ratio_pct: format!("{:.1}", r.flops_ratio),
        }
    }
}

impl From<ReportRow> for SweepRecord {
    fn from(r: ReportRow) -> Self {
        SweepRecord {
            protocol: r.protocol,
            schedule: r.schedule,
            knockout: r.knockout,
            cutoff_or_window_end: r.cutoff_or_window_end,
            layer_ratio: r.layer_ratio,
            score: r.score,
            performance_ratio: r.performance_ratio,
            delta: r.delta,
            logit_drift: r.logit_drift,
            flops_ratio: r.flops_ratio,
        }
    }
}

pub fn render_report(records: &[SweepRecord], format: ReportFormat) -> Result<String> {
    if records.is_empty() {
        return Err(KnockoutError::Usage("a report needs at least one record".into()));
    }
    let rows: Vec<ReportRow> = records.iter().map(ReportRow::from).collect();
    let ser = |e: &dyn std::fmt::Display| KnockoutError::Serialize(e.to_string());
    match format {
        ReportFormat::Json => {
            let mut text = serde_json::to_string_pretty(&rows).map_err(|e| ser(&e))?;
            text.push('\n');
            Ok(text)
        }
        ReportFormat::Csv => {
            let mut writer = csv::Writer::from_writer(Vec::new());
            for row in &rows {
                writer.serialize(row).map_err(|e| ser(&e))?;
            }
            let bytes = writer.into_inner().map_err(|e| ser(&e))?;
            String::from_utf8(bytes).map_err(|e| ser(&e))
        }
    }
}

pub fn emit_report(records: &[SweepRecord], format: ReportFormat, path: &Path) -> Result<()> {
    let text = render_report(records, format)?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn parse_report(text: &str, format: ReportFormat) -> Result<Vec<SweepRecord>> {
    let ser = |e: &dyn std::fmt::Display| KnockoutError::Serialize(e.to_string());
    let rows: Vec<ReportRow> = match format {
        ReportFormat::Json => serde_json::from_str(text).map_err(|e| ser(&e))?,
        ReportFormat::Csv => csv::Reader::from_reader(text.as_bytes())
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| ser(&e))?,
    };
    Ok(rows.into_iter().map(SweepRecord::from).collect())
}
