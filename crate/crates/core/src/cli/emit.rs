use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::CliError;
use crate::dynamics::{PathMeta, PathSample};

fn io(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Writes a header row and then `rows`, quoting fields as RFC 4180 requires.
pub fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_path(path).map_err(|e| io(path, e))?;
    w.write_record(header).map_err(|e| io(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| io(path, e))?;
    }
    w.flush().map_err(|e| io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| io(path, e))?;
    w.write_all(b"\n").map_err(|e| io(path, e))?;
    w.flush().map_err(|e| io(path, e))
}

/// Reads a `time,value` CSV written by `simulate`.
pub fn read_path_csv(path: &Path, n: u64) -> Result<PathSample, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io(path, e))?;
    let header = r.headers().map_err(|e| io(path, e))?.clone();
    if header.len() != 2 || &header[0] != "time" || &header[1] != "value" {
        return Err(CliError::Io(format!(
            "{}: expected header `time,value`",
            path.display()
        )));
    }
    let (mut times, mut values) = (Vec::new(), Vec::new());
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| io(path, e))?;
        let field = |k: usize| -> Result<f64, CliError> {
            rec[k]
                .trim()
                .parse::<f64>()
                .map_err(|e| CliError::Io(format!("{}: row {}: {e}", path.display(), i + 2)))
        };
        times.push(field(0)?);
        values.push(field(1)?);
    }
    Ok(PathSample {
        times,
        values,
        fine_grid: None,
        meta: PathMeta {
            n,
            model: String::from("csv"),
            seed: None,
        },
    })
}
