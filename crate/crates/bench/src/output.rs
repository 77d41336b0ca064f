//! CSV emission: fixed column order, header always present, `{:.16e}` floats,
//! LF line endings.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};

/// Formats a float with 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Formats an optional float; absent values become empty fields.
pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub struct CsvWriter {
    path: PathBuf,
    out: BufWriter<File>,
    columns: usize,
}

impl CsvWriter {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut w = Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
            columns: header.len(),
        };
        w.write_line(header.iter().map(|s| s.to_string()).collect())?;
        Ok(w)
    }

    pub fn row(&mut self, fields: Vec<String>) -> Result<()> {
        debug_assert_eq!(fields.len(), self.columns, "row width differs from header in {}", self.path.display());
        self.write_line(fields)
    }

    fn write_line(&mut self, fields: Vec<String>) -> Result<()> {
        let line = fields.join(",");
        writeln!(self.out, "{line}").map_err(|e| CliError::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(num(0.1), "1.0000000000000001e-1");
        assert_eq!(num(-2.0), "-2.0000000000000000e0");
        assert_eq!(opt(None), "");
    }

    #[test]
    fn writes_header_and_lf_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/out.csv");
        let mut w = CsvWriter::create(&path, &["a", "b"]).unwrap();
        w.row(vec!["1".into(), num(0.5)]).unwrap();
        w.finish().unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text, "a,b\n1,5.0000000000000000e-1\n");
    }
}
