//! One row per day:
//! `date,precip,tmin,tmax,srad,wind,rhum,sw,sno,sf`.
//!
//! Dates are ISO-8601 ordinal dates (`YYYY-DDD`); the synthetic calendar has
//! 366 days in every year. Values are written in Rust's shortest round-trip
//! form, so loading an exported file reproduces the dataset exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::dataset::{doy_feature, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const CSV_HEADER: [&str; 10] = [
    "date", "precip", "tmin", "tmax", "srad", "wind", "rhum", "sw", "sno", "sf",
];

const WEATHER_COLS: usize = 6;

pub fn export_csv(ds: &TimeSeriesDataset, path: &Path) -> Result<()> {
    if ds.x.cols() != WEATHER_COLS + 1 || ds.y.cols() != 3 {
        return Err(Error::config("export expects 7 input columns and 3 targets"));
    }
    if ds.norm_stats.is_some() {
        return Err(Error::config("export expects a dataset in physical units"));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "{}", CSV_HEADER.join(",")).map_err(io)?;
    for d in 0..ds.len() {
        write!(out, "{:04}-{:03}", ds.year[d], ds.doy[d]).map_err(io)?;
        for v in &ds.x.row(d)[..WEATHER_COLS] {
            write!(out, ",{v}").map_err(io)?;
        }
        for v in ds.y.row(d) {
            write!(out, ",{v}").map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    out.flush().map_err(io)
}

fn parse_date(s: &str) -> Option<(i32, u16)> {
    let (y, d) = s.split_once('-')?;
    if d.len() != 3 {
        return None;
    }
    let year = y.parse().ok()?;
    let doy: u16 = d.parse().ok()?;
    (1..=366).contains(&doy).then_some((year, doy))
}

pub fn load_csv(path: &Path) -> Result<TimeSeriesDataset> {
    let mut reader = ::csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })?;
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut doy = Vec::new();
    let mut year = Vec::new();
    let mut saw_header = false;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if !saw_header {
            let names: Vec<&str> = record.iter().map(str::trim).collect();
            if names != CSV_HEADER {
                return Err(parse_err(line, format!("unexpected header {names:?}")));
            }
            saw_header = true;
            continue;
        }
        if record.len() != CSV_HEADER.len() {
            return Err(parse_err(
                line,
                format!("expected {} columns, found {}", CSV_HEADER.len(), record.len()),
            ));
        }
        let (yr, d) = parse_date(record[0].trim())
            .ok_or_else(|| parse_err(line, format!("bad date '{}'", &record[0])))?;
        let mut values = [0.0f64; 9];
        for (k, field) in record.iter().skip(1).enumerate() {
            values[k] = field.trim().parse().map_err(|_| {
                parse_err(line, format!("column '{}': bad number '{field}'", CSV_HEADER[k + 1]))
            })?;
        }
        x.extend_from_slice(&values[..WEATHER_COLS]);
        x.push(doy_feature(d)?);
        y.extend_from_slice(&values[WEATHER_COLS..]);
        doy.push(d);
        year.push(yr);
    }
    if !saw_header {
        return Err(parse_err(1, "empty file".into()));
    }
    let n = doy.len();
    TimeSeriesDataset::new(
        Matrix::from_vec(n, WEATHER_COLS + 1, x)?,
        Matrix::from_vec(n, 3, y)?,
        doy,
        year,
    )
}
