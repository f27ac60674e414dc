//! Experiment reports: a JSON document with per-metric pass/fail flags plus
//! one CSV file per data series.
//!
//! The JSON report is byte-stable for a fixed `(config, seed, version)`:
//! wall-clock time is kept out of it and written to a sidecar file instead.
//! CSV cells carry 17 significant digits so series round-trip exactly.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::engine::RunStats;
use crate::error::{MllError, Result};

#[derive(Debug, Clone, Serialize)]
pub struct MetricResult {
    pub name: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pass: Option<bool>,
}

impl MetricResult {
    /// An informational value with no pass criterion.
    pub fn value(name: impl Into<String>, value: f64) -> Self {
        MetricResult { name: name.into(), value, half_width: None, target: None, tolerance: None, pass: None }
    }

    pub fn with_half_width(mut self, hw: f64) -> Self {
        self.half_width = Some(hw);
        self
    }

    /// `|value - target| <= tolerance`.
    pub fn checked(name: impl Into<String>, value: f64, target: f64, tolerance: f64) -> Self {
        MetricResult {
            name: name.into(),
            value,
            half_width: None,
            target: Some(target),
            tolerance: Some(tolerance),
            pass: Some((value - target).abs() <= tolerance),
        }
    }

    /// `lo <= value <= hi`.
    pub fn windowed(name: impl Into<String>, value: f64, window: (f64, f64)) -> Self {
        let mid = 0.5 * (window.0 + window.1);
        let half = 0.5 * (window.1 - window.0);
        MetricResult {
            name: name.into(),
            value,
            half_width: None,
            target: Some(mid),
            tolerance: Some(half),
            pass: Some(window.0 <= value && value <= window.1),
        }
    }

    /// `value <= upper`.
    pub fn at_most(name: impl Into<String>, value: f64, upper: f64) -> Self {
        MetricResult {
            name: name.into(),
            value,
            half_width: None,
            target: Some(upper),
            tolerance: None,
            pass: Some(value <= upper),
        }
    }

    /// `value >= lower`.
    pub fn at_least(name: impl Into<String>, value: f64, lower: f64) -> Self {
        MetricResult {
            name: name.into(),
            value,
            half_width: None,
            target: Some(lower),
            tolerance: None,
            pass: Some(value >= lower),
        }
    }

    /// A boolean check reported as 0/1.
    pub fn flag(name: impl Into<String>, ok: bool) -> Self {
        MetricResult {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            half_width: None,
            target: Some(1.0),
            tolerance: Some(0.0),
            pass: Some(ok),
        }
    }
}

/// One CSV output: `<name>.csv` with a header row and numeric rows.
#[derive(Debug, Clone)]
pub struct CsvSeries {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvSeries {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        CsvSeries {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub artifact_version: String,
    pub experiment: String,
    pub passed: bool,
    pub metrics: Vec<MetricResult>,
    pub violations: RunStats,
    pub config: serde_json::Value,
    #[serde(skip)]
    pub series: Vec<CsvSeries>,
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

impl ExperimentReport {
    pub fn new(experiment: &str, config: serde_json::Value) -> Self {
        ExperimentReport {
            artifact_version: format!("mll {}", env!("CARGO_PKG_VERSION")),
            experiment: experiment.to_string(),
            passed: true,
            metrics: Vec::new(),
            violations: RunStats::default(),
            config,
            series: Vec::new(),
            wall_clock_seconds: 0.0,
        }
    }

    pub fn add_metric(&mut self, m: MetricResult) {
        if let Some(false) = m.pass {
            self.passed = false;
        }
        self.metrics.push(m);
    }

    pub fn merge_stats(&mut self, s: &RunStats) {
        self.violations.violations += s.violations;
        self.violations.aborted_chains += s.aborted_chains;
        self.violations.resample_draws += s.resample_draws;
        self.violations.clamp_events += s.clamp_events;
        self.violations.step_cap_exceeded |= s.step_cap_exceeded;
    }

    /// Write `report.json`, one CSV per series, and the timing sidecar.
    /// Returns the path of the JSON report.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let json_path = dir.join("report.json");
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&json_path, text)?;
        for series in &self.series {
            let path = dir.join(format!("{}.csv", series.name));
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::CRLF)
                .from_path(&path)
                .map_err(|e| MllError::Io(std::io::Error::other(e)))?;
            w.write_record(&series.header)
                .map_err(|e| MllError::Io(std::io::Error::other(e)))?;
            for row in &series.rows {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
                w.write_record(&cells)
                    .map_err(|e| MllError::Io(std::io::Error::other(e)))?;
            }
            w.flush()?;
        }
        // Timing is environment noise; keep it out of the stable report.
        fs::write(
            dir.join("timing.txt"),
            format!("wall_clock_seconds {:.3}\n", self.wall_clock_seconds),
        )?;
        Ok(json_path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_constructors() {
        let m = MetricResult::checked("x", 1.05, 1.0, 0.1);
        assert_eq!(m.pass, Some(true));
        let m = MetricResult::checked("x", 1.2, 1.0, 0.1);
        assert_eq!(m.pass, Some(false));
        let m = MetricResult::windowed("s", 1.5, (1.3, 1.8));
        assert_eq!(m.pass, Some(true));
        let m = MetricResult::windowed("s", 1.9, (1.3, 1.8));
        assert_eq!(m.pass, Some(false));
    }

    #[test]
    fn failing_metric_fails_the_report() {
        let mut rep = ExperimentReport::new("test", serde_json::json!({}));
        rep.add_metric(MetricResult::value("info", 3.0));
        assert!(rep.passed);
        rep.add_metric(MetricResult::flag("bad", false));
        assert!(!rep.passed);
    }

    #[test]
    fn report_bytes_are_stable_and_exclude_timing() {
        let dir = std::env::temp_dir().join(format!("mll_report_test_{}", std::process::id()));
        let mut rep = ExperimentReport::new("test", serde_json::json!({"seed": 1}));
        rep.add_metric(MetricResult::value("v", 0.1 + 0.2));
        let mut s = CsvSeries::new("series", &["h", "error"]);
        s.push(vec![0.1, 1e-3]);
        rep.series.push(s);
        rep.wall_clock_seconds = 1.23;
        let p1 = rep.write(&dir).unwrap();
        let b1 = std::fs::read(&p1).unwrap();
        rep.wall_clock_seconds = 9.87;
        let p2 = rep.write(&dir).unwrap();
        let b2 = std::fs::read(&p2).unwrap();
        assert_eq!(b1, b2);
        let csv = std::fs::read_to_string(dir.join("series.csv")).unwrap();
        assert!(csv.starts_with("h,error\r\n"));
        assert!(csv.contains("e-1"), "17-significant-digit scientific cells: {csv}");
        std::fs::remove_dir_all(&dir).ok();
    }
}
