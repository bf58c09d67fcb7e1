use std::collections::HashMap;
use std::path::Path;

use chrono::{Duration, NaiveDateTime};

use crate::error::{Error, Result};

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

pub fn format_timestamp(t: &NaiveDateTime) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

/// Accepts `YYYY-MM-DDTHH:MM:SS` or the same with a space separator.
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT)
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S"))
        .ok()
}

/// Hourly, gap-free `T×D` traffic matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesFrame {
    timestamps: Vec<NaiveDateTime>,
    cell_ids: Vec<String>,
    values: Vec<f64>,
}

impl SeriesFrame {
    pub fn new(timestamps: Vec<NaiveDateTime>, cell_ids: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if cell_ids.is_empty() {
            return Err(Error::Shape("a frame needs at least one cell".into()));
        }
        if values.len() != timestamps.len() * cell_ids.len() {
            return Err(Error::Shape(format!(
                "{} values for {} timestamps x {} cells",
                values.len(),
                timestamps.len(),
                cell_ids.len()
            )));
        }
        for w in timestamps.windows(2) {
            if w[1] - w[0] != Duration::hours(1) {
                return Err(Error::Config(format!(
                    "timestamps must advance by exactly one hour: {} -> {}",
                    format_timestamp(&w[0]),
                    format_timestamp(&w[1])
                )));
            }
        }
        Ok(Self {
            timestamps,
            cell_ids,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.cell_ids.len()
    }

    pub fn timestamps(&self) -> &[NaiveDateTime] {
        &self.timestamps
    }

    pub fn cell_ids(&self) -> &[String] {
        &self.cell_ids
    }

    /// Row-major `T×D` values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let d = self.dims();
        &self.values[t * d..(t + 1) * d]
    }

    /// Rows `range` as a new frame.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        let d = self.dims();
        Self {
            timestamps: self.timestamps[range.clone()].to_vec(),
            cell_ids: self.cell_ids.clone(),
            values: self.values[range.start * d..range.end * d].to_vec(),
        }
    }
}

/// Reads a long-format `timestamp,cell_id,volume` file into a dense frame.
///
/// Rows must be grouped by timestamp in increasing order, every timestamp
/// must list every cell exactly once, and consecutive timestamps must be one
/// hour apart. Cell order follows the first timestamp block. Errors carry
/// the 1-based line number (the header is line 1).
pub fn load_traffic_csv(path: impl AsRef<Path>) -> Result<SeriesFrame> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_traffic(file)
}

fn read_traffic<R: std::io::Read>(reader: R) -> Result<SeriesFrame> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    if names != ["timestamp", "cell_id", "volume"] {
        return Err(Error::Ingestion {
            row: 1,
            message: format!("expected header timestamp,cell_id,volume, found {}", names.join(",")),
        });
    }

    let mut timestamps: Vec<NaiveDateTime> = Vec::new();
    let mut cell_ids: Vec<String> = Vec::new();
    let mut cell_index: HashMap<String, usize> = HashMap::new();
    let mut values: Vec<f64> = Vec::new();
    // Current block: per-cell value slot, filled as rows arrive.
    let mut block: Vec<Option<f64>> = Vec::new();

    let close_block = |timestamps: &[NaiveDateTime],
                       cell_ids: &[String],
                       block: &mut Vec<Option<f64>>,
                       values: &mut Vec<f64>,
                       line: usize|
     -> Result<()> {
        if timestamps.is_empty() {
            return Ok(());
        }
        if let Some(missing) = block.iter().position(Option::is_none) {
            return Err(Error::Ingestion {
                row: line,
                message: format!(
                    "timestamp {} is missing cell {}",
                    format_timestamp(timestamps.last().unwrap()),
                    cell_ids[missing]
                ),
            });
        }
        values.extend(block.iter().map(|v| v.unwrap()));
        Ok(())
    };

    let mut line = 1;
    for record in rdr.records() {
        line += 1;
        let record = record?;
        if record.len() != 3 {
            return Err(Error::Ingestion {
                row: line,
                message: format!("expected 3 fields, found {}", record.len()),
            });
        }
        let ts = parse_timestamp(record[0].trim()).ok_or_else(|| Error::Ingestion {
            row: line,
            message: format!("unparseable timestamp {:?}", &record[0]),
        })?;
        let cell = record[1].trim().to_string();
        let volume: f64 = record[2].trim().parse().map_err(|_| Error::Ingestion {
            row: line,
            message: format!("non-numeric volume {:?}", &record[2]),
        })?;
        if !volume.is_finite() {
            return Err(Error::Ingestion {
                row: line,
                message: format!("non-finite volume {volume}"),
            });
        }

        let new_block = timestamps.last().map_or(true, |last| *last != ts);
        if new_block {
            if let Some(last) = timestamps.last() {
                if ts < *last {
                    return Err(Error::Ingestion {
                        row: line,
                        message: format!(
                            "timestamp {} precedes {}",
                            format_timestamp(&ts),
                            format_timestamp(last)
                        ),
                    });
                }
                if ts - *last != Duration::hours(1) {
                    return Err(Error::Ingestion {
                        row: line,
                        message: format!(
                            "gap between {} and {}; series must be hourly and gap-free",
                            format_timestamp(last),
                            format_timestamp(&ts)
                        ),
                    });
                }
                // The first block fixes the cell set.
                close_block(&timestamps, &cell_ids, &mut block, &mut values, line)?;
            }
            timestamps.push(ts);
            block = vec![None; cell_ids.len()];
        }

        let first_block = timestamps.len() == 1;
        let idx = match cell_index.get(&cell) {
            Some(&i) => i,
            None if first_block => {
                cell_index.insert(cell.clone(), cell_ids.len());
                cell_ids.push(cell.clone());
                block.push(None);
                cell_ids.len() - 1
            }
            None => {
                return Err(Error::Ingestion {
                    row: line,
                    message: format!("cell {cell} does not appear at the first timestamp"),
                })
            }
        };
        if block[idx].is_some() {
            return Err(Error::Ingestion {
                row: line,
                message: format!("duplicate row for ({}, {cell})", format_timestamp(&ts)),
            });
        }
        block[idx] = Some(volume);
    }
    close_block(&timestamps, &cell_ids, &mut block, &mut values, line + 1)?;
    if timestamps.is_empty() {
        return Err(Error::Ingestion {
            row: 2,
            message: "no data rows".into(),
        });
    }
    SeriesFrame::new(timestamps, cell_ids, values)
}

/// Writes a frame in the long `timestamp,cell_id,volume` format. Values use
/// the shortest representation that round-trips exactly.
pub fn write_traffic_csv(path: impl AsRef<Path>, frame: &SeriesFrame) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["timestamp", "cell_id", "volume"])?;
    for (t, ts) in frame.timestamps().iter().enumerate() {
        let stamp = format_timestamp(ts);
        for (cell, v) in frame.cell_ids().iter().zip(frame.row(t)) {
            w.write_record([stamp.as_str(), cell.as_str(), &v.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(s: &str) -> Result<SeriesFrame> {
        read_traffic(s.as_bytes())
    }

    const OK: &str = "timestamp,cell_id,volume
2024-01-01T00:00:00,a,1
2024-01-01T00:00:00,b,2
2024-01-01T01:00:00,b,4
2024-01-01T01:00:00,a,3
2024-01-01T02:00:00,a,5
2024-01-01T02:00:00,b,6
";

    #[test]
    fn dense_frame_from_long_rows() {
        let f = read(OK).unwrap();
        assert_eq!(f.len(), 3);
        assert_eq!(f.dims(), 2);
        assert_eq!(f.values(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(f.cell_ids(), &["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn duplicate_row_names_its_line() {
        let bad = OK.replace("2024-01-01T01:00:00,b,4", "2024-01-01T01:00:00,a,4");
        match read(&bad) {
            Err(Error::Ingestion { row, message }) => {
                assert_eq!(row, 5);
                assert!(message.contains("duplicate"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_pair_is_an_error() {
        let bad = OK.replace("2024-01-01T01:00:00,b,4\n", "");
        assert!(matches!(read(&bad), Err(Error::Ingestion { .. })));
    }

    #[test]
    fn unordered_and_gapped_timestamps_are_rejected() {
        let unordered = "timestamp,cell_id,volume
2024-01-01T01:00:00,a,1
2024-01-01T00:00:00,a,1
";
        assert!(matches!(read(unordered), Err(Error::Ingestion { row: 3, .. })));
        let gap = "timestamp,cell_id,volume
2024-01-01T00:00:00,a,1
2024-01-01T02:00:00,a,1
";
        assert!(matches!(read(gap), Err(Error::Ingestion { row: 3, .. })));
    }

    #[test]
    fn non_numeric_volume_is_rejected() {
        let bad = OK.replace(",a,3", ",a,three");
        assert!(matches!(read(&bad), Err(Error::Ingestion { row: 5, .. })));
    }

    #[test]
    fn unknown_cell_after_first_block() {
        let bad = OK.replace("2024-01-01T02:00:00,b,6", "2024-01-01T02:00:00,c,6");
        assert!(matches!(read(&bad), Err(Error::Ingestion { row: 7, .. })));
    }

    #[test]
    fn wrong_header() {
        assert!(matches!(read("t,c,v\n"), Err(Error::Ingestion { row: 1, .. })));
    }
}
