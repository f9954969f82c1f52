//! Deterministic CSV / JSON / JSONL writers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::invalid(format!("cannot write {}: {e}", path.display()))
}

/// 17 significant digits, so the value round-trips exactly.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// A CSV file with a header row. Empty `rows` gives a header-only file.
pub fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::invalid(format!(
                "{}: row has {} fields, header has {}",
                path.display(),
                row.len(),
                header.len()
            )));
        }
        w.write_record(&row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// One compact JSON object per line.
pub fn write_jsonl<T, I>(path: &Path, records: I) -> Result<()>
where
    T: Serialize,
    I: IntoIterator<Item = T>,
{
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, &r).map_err(|e| io_err(path, e))?;
        w.write_all(b"\n").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_formats() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        write_csv(
            &p,
            &["b", "seed", "steps", "sfo", "exit_reason"],
            Vec::<Vec<String>>::new(),
        )
        .unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "b,seed,steps,sfo,exit_reason\n");
        write_csv(&p, &["x"], vec![vec![fmt_float(0.1)]]).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "x\n1.0000000000000001e-1\n");
        assert_eq!(fmt_float(0.1).parse::<f64>().unwrap(), 0.1);
        assert!(write_csv(&p, &["x"], vec![vec!["1".into(), "2".into()]]).is_err());
    }

    #[test]
    fn jsonl_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.jsonl");
        write_jsonl(&p, [serde_json::json!({"t": 0}), serde_json::json!({"t": 1})]).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "{\"t\":0}\n{\"t\":1}\n");
    }
}
