//! Output directories: atomic writes and CSV readers for the emitted files.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use prefdens::density::{LogDensity, Support};

use crate::error::{Error, Result};

/// Writes files into one directory and remembers their names.
pub struct Emitter {
    dir: PathBuf,
    files: Vec<String>,
}

impl Emitter {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes through a temporary file in the same directory and renames it
    /// into place, so readers never observe a partial file.
    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        write_atomic(&self.dir.join(name), contents)?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(())
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }
}

pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn read(dir: &Path, name: &str) -> Result<String> {
    std::fs::read_to_string(dir.join(name)).map_err(|e| Error::Output { file: name.to_string(), reason: e.to_string() })
}

/// A `x,log_p` density file.
pub fn read_density(dir: &Path, name: &str, support: impl Into<Support>) -> Result<LogDensity> {
    let text = read(dir, name)?;
    LogDensity::from_csv(&text, support).map_err(|e| Error::Output { file: name.to_string(), reason: e.to_string() })
}

/// Rows of a headed CSV file as maps from column name to value.
pub fn read_rows(dir: &Path, name: &str, columns: &[&str]) -> Result<Vec<Vec<String>>> {
    let text = read(dir, name)?;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers()?.clone();
    let idx = columns
        .iter()
        .map(|c| {
            header
                .iter()
                .position(|h| h == *c)
                .ok_or_else(|| Error::Output { file: name.to_string(), reason: format!("missing column `{c}`") })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(idx.iter().map(|&i| rec.get(i).unwrap_or("").to_string()).collect());
    }
    Ok(rows)
}

pub fn parse_real(file: &str, s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Output { file: file.to_string(), reason: format!("`{s}` is not a number") })
}

/// Numeric columns of a CSV file, one vector per requested column.
pub fn read_columns(dir: &Path, name: &str, columns: &[&str]) -> Result<Vec<Vec<f64>>> {
    let rows = read_rows(dir, name, columns)?;
    let mut out = vec![Vec::with_capacity(rows.len()); columns.len()];
    for row in rows {
        for (col, v) in out.iter_mut().zip(&row) {
            col.push(parse_real(name, v)?);
        }
    }
    Ok(out)
}

/// Final recorded loss of a `step,loss,tv,kl` history file.
pub fn final_loss(dir: &Path, name: &str) -> Result<f64> {
    let cols = read_columns(dir, name, &["loss"])?;
    cols[0].last().copied().ok_or_else(|| Error::Output { file: name.to_string(), reason: "empty history".into() })
}
