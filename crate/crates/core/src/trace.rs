//! CSV trace files.
//!
//! Values are written with the shortest decimal form that parses back to the
//! same `f64`, so a written trace reads back bit for bit.

use std::path::Path;

use crate::error::{Error, Result};
use crate::functionals::{EnergySample, CSV_COLUMNS};

fn io(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

pub fn write_trace<W: std::io::Write>(w: W, trace: &[EnergySample]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_COLUMNS).map_err(io)?;
    for s in trace {
        out.write_record(s.columns().iter().map(|v| format!("{v:?}"))).map_err(io)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trace<R: std::io::Read>(r: R) -> Result<Vec<EnergySample>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers().map_err(io)?;
    if header.iter().ne(CSV_COLUMNS.iter().copied()) {
        return Err(Error::Io(format!("unexpected trace header: {}", header.iter().collect::<Vec<_>>().join(","))));
    }
    let mut trace = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(io)?;
        let mut cols = [0.0; 15];
        for (c, field) in cols.iter_mut().zip(rec.iter()) {
            *c = field.parse().map_err(|_| Error::Io(format!("row {}: bad number `{field}`", line + 1)))?;
        }
        if rec.len() != 15 {
            return Err(Error::Io(format!("row {}: expected 15 fields, got {}", line + 1, rec.len())));
        }
        trace.push(EnergySample::from_columns(cols));
    }
    Ok(trace)
}

pub fn save_trace(path: &Path, trace: &[EnergySample]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    write_trace(std::fs::File::create(path)?, trace)
}

pub fn load_trace(path: &Path) -> Result<Vec<EnergySample>> {
    read_trace(std::fs::File::open(path)?)
}
