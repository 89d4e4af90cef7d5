use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::active::mean_std;
use crate::error::{Error, Result};

pub const METRICS_FILE: &str = "final_metrics.json";

/// One method's result over several seeds or repeats. A run directory's
/// `final_metrics.json` holds a list of these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub method: String,
    pub dataset: String,
    pub labeled_fraction: Option<f64>,
    /// `accuracy` (a fraction) or `AULC` (0 to 100).
    pub metric: String,
    pub seeds: Vec<u64>,
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl Metrics {
    pub fn new(
        method: String,
        dataset: String,
        labeled_fraction: Option<f64>,
        metric: &str,
        seeds: Vec<u64>,
        values: Vec<f64>,
    ) -> Self {
        let (mean, std) = mean_std(&values);
        Self {
            method,
            dataset,
            labeled_fraction,
            metric: metric.into(),
            seeds,
            values,
            mean,
            std,
        }
    }

    /// `0.6374 (0.0180)` for accuracies, `82.09 (0.53)` for AULC.
    pub fn report(&self) -> String {
        if self.metric == "AULC" {
            format!("{:.2} ({:.2})", self.mean, self.std)
        } else {
            format!("{:.4} ({:.4})", self.mean, self.std)
        }
    }
}

pub fn write_metrics(dir: &Path, metrics: &[Metrics]) -> Result<()> {
    let text = serde_json::to_string_pretty(metrics)?;
    std::fs::write(dir.join(METRICS_FILE), text + "\n")?;
    Ok(())
}

pub fn read_metrics(dir: &Path) -> Result<Vec<Metrics>> {
    let text = std::fs::read_to_string(dir.join(METRICS_FILE))?;
    Ok(serde_json::from_str(&text)?)
}

/// Comparison table over run directories. Directories without a readable
/// metrics file are skipped and returned alongside the table.
pub fn summarize(dirs: &[PathBuf]) -> Result<(String, Vec<(PathBuf, Error)>)> {
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for d in dirs {
        match read_metrics(d) {
            Ok(m) => rows.extend(m),
            Err(e) => skipped.push((d.clone(), e)),
        }
    }
    rows.sort_by(|a, b| {
        let fa = a.labeled_fraction.unwrap_or(-1.0);
        let fb = b.labeled_fraction.unwrap_or(-1.0);
        a.method
            .cmp(&b.method)
            .then(fa.total_cmp(&fb))
            .then(a.dataset.cmp(&b.dataset))
    });

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "method",
        "dataset",
        "labeled_fraction",
        "metric",
        "mean",
        "std",
        "report",
    ])?;
    for r in &rows {
        w.write_record([
            r.method.clone(),
            r.dataset.clone(),
            r.labeled_fraction.map_or(String::new(), |f| format!("{f:?}")),
            r.metric.clone(),
            format!("{:?}", r.mean),
            format!("{:?}", r.std),
            r.report(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok((String::from_utf8(bytes).expect("csv output is UTF-8"), skipped))
}
