//! One JSON value per line, with an optional leading `#` comment line.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub(crate) fn write<T: Serialize>(path: &Path, header: Option<&str>, items: &[T]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res: std::io::Result<()> = (|| {
        if let Some(h) = header {
            writeln!(w, "# {h}")?;
        }
        for item in items {
            serde_json::to_writer(&mut w, item)?;
            writeln!(w)?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

/// Returns the header text (without `# `) and the records.
pub(crate) fn read<T: DeserializeOwned>(path: &Path) -> Result<(Option<String>, Vec<T>)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut header = None;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(h) = line.strip_prefix('#') {
            if i == 0 {
                header = Some(h.trim().to_string());
                continue;
            }
            return Err(Error::parse(path, i + 1, "comment after the first line"));
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?);
    }
    Ok((header, out))
}
