use std::collections::BTreeSet;
use std::path::Path;

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};

use crate::error::{Error, Result};

/// `[hour-of-day (24) | day-of-week (7) | is-holiday (1)]`.
pub const METADATA_WIDTH: usize = 32;

/// Calendar one-hots, one row per timestamp. Day-of-week index 0 is Monday.
pub fn one_hot_metadata(timestamps: &[NaiveDateTime], holidays: &BTreeSet<NaiveDate>) -> Vec<f64> {
    let mut out = vec![0.0; timestamps.len() * METADATA_WIDTH];
    for (row, ts) in out.chunks_mut(METADATA_WIDTH).zip(timestamps) {
        row[ts.hour() as usize] = 1.0;
        row[24 + ts.weekday().num_days_from_monday() as usize] = 1.0;
        if holidays.contains(&ts.date()) {
            row[31] = 1.0;
        }
    }
    out
}

/// Newline-delimited ISO-8601 dates; blank lines and `#` comments ignored.
pub fn load_holidays(path: impl AsRef<Path>) -> Result<BTreeSet<NaiveDate>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let date = NaiveDate::parse_from_str(line, "%Y-%m-%d").map_err(|_| Error::Ingestion {
            row: i + 1,
            message: format!("not an ISO-8601 date: {line:?}"),
        })?;
        out.insert(date);
    }
    Ok(out)
}
