use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::conformal::IntervalForecast;
use crate::data::format_timestamp;
use crate::error::{Error, Result};
use crate::meta::EpochRecord;

pub const REPORT_SCHEMA: &str = "cellcast.report/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointRow {
    pub variant: String,
    pub horizon: usize,
    pub mae: f64,
    pub rmse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalRow {
    pub variant: String,
    pub horizon: usize,
    /// `icp` when `k == 2`, otherwise `ccp`.
    pub scheme: String,
    pub k: usize,
    pub alpha: f64,
    pub calibration_size: usize,
    pub cr: f64,
    pub wl: f64,
}

/// Everything a run measured, in a fixed key order. Wall-clock timings
/// live in a separate file so reports stay byte-identical across runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema: String,
    pub kind: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub point: Vec<PointRow>,
    pub baselines: Vec<PointRow>,
    pub intervals: Vec<IntervalRow>,
    pub files: Vec<String>,
}

impl MetricsReport {
    /// Checks that every metric is finite and `MAE ≤ RMSE` on each row.
    pub fn check(&self) -> Result<()> {
        for r in self.point.iter().chain(&self.baselines) {
            if !(r.mae.is_finite() && r.rmse.is_finite()) {
                return Err(Error::NumericOverflow(format!("non-finite metrics for {}", r.variant)));
            }
            if r.mae > r.rmse * (1.0 + 1e-12) {
                return Err(Error::Contract(format!(
                    "MAE {} above RMSE {} for {}",
                    r.mae, r.rmse, r.variant
                )));
            }
        }
        if let Some(r) = self.intervals.iter().find(|r| !(r.cr.is_finite() && r.wl.is_finite())) {
            return Err(Error::NumericOverflow(format!(
                "non-finite interval metrics for {}",
                r.variant
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    /// `(phase, seconds)` in execution order.
    pub phases: Vec<(String, f64)>,
}

/// Collects artifact paths relative to one output directory.
#[derive(Debug)]
pub struct ArtifactWriter {
    pub dir: PathBuf,
    pub stem: String,
    pub written: Vec<String>,
}

impl ArtifactWriter {
    pub fn new(dir: impl Into<PathBuf>, stem: String) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self {
            dir,
            stem,
            written: Vec::new(),
        })
    }

    /// `<dir>/<stem>-<suffix>`, remembered for the report.
    pub fn path(&mut self, suffix: &str) -> PathBuf {
        let name = format!("{}-{}", self.stem, suffix);
        self.written.push(name.clone());
        self.dir.join(name)
    }

    pub fn write_text(&mut self, suffix: &str, text: &str) -> Result<PathBuf> {
        let p = self.path(suffix);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    }

    pub fn write_csv(&mut self, suffix: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
        let p = self.path(suffix);
        write_csv(&p, header, rows)?;
        Ok(p)
    }
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// `t,cell_id,yhat,lo,hi`, one row per (time, cell).
pub fn interval_rows(
    timestamps: &[chrono::NaiveDateTime],
    cell_ids: &[String],
    intervals: &[IntervalForecast],
) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (ts, iv) in timestamps.iter().zip(intervals) {
        for (j, id) in cell_ids.iter().enumerate() {
            rows.push(vec![
                format_timestamp(ts),
                id.clone(),
                iv.yhat[j].to_string(),
                iv.lo[j].to_string(),
                iv.hi[j].to_string(),
            ]);
        }
    }
    rows
}

pub const INTERVAL_HEADER: [&str; 5] = ["t", "cell_id", "yhat", "lo", "hi"];

pub const LOSS_HEADER: [&str; 6] = [
    "variant",
    "horizon",
    "epoch",
    "query_loss",
    "support_loss",
    "hypergradient_norm",
];

pub fn loss_rows(variant: &str, horizon: usize, history: &[EpochRecord]) -> Vec<Vec<String>> {
    history
        .iter()
        .map(|r| {
            vec![
                variant.to_string(),
                horizon.to_string(),
                r.epoch.to_string(),
                r.query_loss.to_string(),
                r.support_loss.to_string(),
                r.hypergradient_norm.to_string(),
            ]
        })
        .collect()
}

/// Sim-to-real table: one row per ratio, MAE and RMSE per horizon.
pub fn ratio_table(ratios: &[usize], horizons: &[usize], point: &[PointRow]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["ratio".to_string()];
    for h in horizons {
        header.push(format!("mae_h{h}"));
        header.push(format!("rmse_h{h}"));
    }
    let rows = ratios
        .iter()
        .map(|&r| {
            let label = ratio_label(r);
            let mut row = vec![label.clone()];
            for &h in horizons {
                match point.iter().find(|p| p.variant == label && p.horizon == h) {
                    Some(p) => row.extend([p.mae.to_string(), p.rmse.to_string()]),
                    None => row.extend([String::new(), String::new()]),
                }
            }
            row
        })
        .collect();
    (header, rows)
}

pub fn ratio_label(ratio: usize) -> String {
    if ratio == 0 {
        "real-only".into()
    } else {
        format!("{ratio}:1")
    }
}

pub fn scheme_name(k: usize) -> &'static str {
    if k == 2 {
        "icp"
    } else {
        "ccp"
    }
}
