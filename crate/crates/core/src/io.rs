//! File formats: paths as CSV, reports and configs as JSON.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::PathSample;

/// CSV with header `index,value`.
pub fn write_path_csv<W: Write>(values: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index", "value"])?;
    for (i, v) in values.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the `value` column of a path CSV.
pub fn read_path_csv<R: Read>(input: R) -> Result<PathSample> {
    let mut r = csv::Reader::from_reader(input);
    let col = r
        .headers()?
        .iter()
        .position(|h| h == "value")
        .ok_or_else(|| Error::InvalidSpec("path CSV needs a `value` column".into()))?;
    let mut values = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = rec.get(col).unwrap_or("");
        let v: f64 = field
            .trim()
            .parse()
            .map_err(|_| Error::InvalidSpec(format!("not a number in path CSV: {field:?}")))?;
        values.push(v);
    }
    PathSample::from_values(values)
}

pub fn read_path_file(path: &Path) -> Result<PathSample> {
    read_path_csv(BufReader::new(File::open(path)?))
}

pub fn write_path_file(path: &Path, values: &[f64]) -> Result<()> {
    write_path_csv(values, BufWriter::new(File::create(path)?))
}

pub fn read_json_file<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// Pretty JSON with a trailing newline.
pub fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}
