//! CSV side files written by the simulator: events, image and cell positions.

use std::path::Path;

use chrono::NaiveDateTime;

use crate::data::{format_timestamp, parse_timestamp};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Ingestion {
        row: line,
        message: format!("not a number: {field:?}"),
    })
}

/// Wide events file: `timestamp,<name_0>,...,<name_k>`.
pub fn write_events_csv(
    path: impl AsRef<Path>,
    timestamps: &[NaiveDateTime],
    names: &[String],
    values: &[f64],
) -> Result<()> {
    let path = path.as_ref();
    let k = names.len();
    if values.len() != timestamps.len() * k {
        return Err(Error::Shape(format!(
            "{} event values for {} rows of {} columns",
            values.len(),
            timestamps.len(),
            k
        )));
    }
    let mut w = writer(path)?;
    let mut header = vec!["timestamp".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    for (t, ts) in timestamps.iter().enumerate() {
        let mut rec = vec![format_timestamp(ts)];
        rec.extend(values[t * k..(t + 1) * k].iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Returns `(timestamps, column names, row-major values)`.
pub fn load_events_csv(path: impl AsRef<Path>) -> Result<(Vec<NaiveDateTime>, Vec<String>, Vec<f64>)> {
    let path = path.as_ref();
    let mut r = reader(path)?;
    let header = r.headers()?.clone();
    if header.get(0) != Some("timestamp") || header.len() < 2 {
        return Err(Error::Ingestion {
            row: 1,
            message: "events header must be `timestamp,<feature>...`".into(),
        });
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut stamps = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        if rec.len() != names.len() + 1 {
            return Err(Error::Ingestion {
                row: line,
                message: format!("expected {} fields, got {}", names.len() + 1, rec.len()),
            });
        }
        stamps.push(parse_timestamp(&rec[0]).ok_or_else(|| Error::Ingestion {
            row: line,
            message: format!("bad timestamp {:?}", &rec[0]),
        })?);
        for f in rec.iter().skip(1) {
            values.push(parse_f64(f, line)?);
        }
    }
    Ok((stamps, names, values))
}

/// Flat image file with header `w,h,c,value`.
pub fn write_image_csv(path: impl AsRef<Path>, image: &Tensor) -> Result<()> {
    let path = path.as_ref();
    let [w_n, h_n, c_n] = match image.shape() {
        &[a, b, c] => [a, b, c],
        s => return Err(Error::Shape(format!("image must be W×H×C, got {s:?}"))),
    };
    let mut w = writer(path)?;
    w.write_record(["w", "h", "c", "value"])?;
    for x in 0..w_n {
        for y in 0..h_n {
            for c in 0..c_n {
                let v = image.data()[(x * h_n + y) * c_n + c];
                w.write_record(&[x.to_string(), y.to_string(), c.to_string(), v.to_string()])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_image_csv(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let mut r = reader(path)?;
    if r.headers()?.iter().collect::<Vec<_>>() != ["w", "h", "c", "value"] {
        return Err(Error::Ingestion {
            row: 1,
            message: "image header must be `w,h,c,value`".into(),
        });
    }
    let mut entries = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        let idx = |k: usize| -> Result<usize> {
            rec.get(k)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Ingestion {
                    row: line,
                    message: format!("bad index in column {k}"),
                })
        };
        let v = parse_f64(rec.get(3).unwrap_or(""), line)?;
        entries.push((idx(0)?, idx(1)?, idx(2)?, v, line));
    }
    let dim = |f: fn(&(usize, usize, usize, f64, usize)) -> usize| entries.iter().map(f).max().map_or(0, |m| m + 1);
    let (wn, hn, cn) = (dim(|e| e.0), dim(|e| e.1), dim(|e| e.2));
    if entries.len() != wn * hn * cn || entries.is_empty() {
        return Err(Error::Ingestion {
            row: entries.len() + 1,
            message: format!(
                "image has {} entries, expected a full {wn}×{hn}×{cn} grid",
                entries.len()
            ),
        });
    }
    let mut data = vec![f64::NAN; wn * hn * cn];
    for (x, y, c, v, line) in entries {
        let slot = &mut data[(x * hn + y) * cn + c];
        if !slot.is_nan() {
            return Err(Error::Ingestion {
                row: line,
                message: format!("duplicate pixel ({x},{y},{c})"),
            });
        }
        *slot = v;
    }
    Tensor::new(vec![wn, hn, cn], data)
}

/// `cell_id,x,y`.
pub fn write_cells_csv(path: impl AsRef<Path>, cell_ids: &[String], positions: &[(f64, f64)]) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    w.write_record(["cell_id", "x", "y"])?;
    for (id, (x, y)) in cell_ids.iter().zip(positions) {
        w.write_record(&[id.clone(), x.to_string(), y.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_cells_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<(f64, f64)>)> {
    let path = path.as_ref();
    let mut r = reader(path)?;
    let mut ids = Vec::new();
    let mut pos = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        if rec.len() != 3 {
            return Err(Error::Ingestion {
                row: line,
                message: "expected `cell_id,x,y`".into(),
            });
        }
        ids.push(rec[0].to_string());
        pos.push((parse_f64(&rec[1], line)?, parse_f64(&rec[2], line)?));
    }
    Ok((ids, pos))
}
