//! Comma-separated output tables.
//!
//! Numbers are written with 17 significant digits (`{:.16e}`), which is
//! enough for every `f64` to parse back to the same bits. Files are written
//! to a temporary sibling and renamed into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use tempfile::NamedTempFile;

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: row {row} column {column}: cannot parse {text:?} as a number")]
    Number {
        path: PathBuf,
        row: usize,
        column: usize,
        text: String,
    },
}

pub fn format_number(x: f64) -> String {
    format!("{x:.16e}")
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> TableError + '_ {
    move |source| TableError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), TableError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(io_error(path))?;
    let mut tmp = NamedTempFile::new_in(dir).map_err(io_error(path))?;
    tmp.write_all(bytes).map_err(io_error(path))?;
    tmp.as_file().sync_all().map_err(io_error(path))?;
    tmp.persist(path).map_err(|e| io_error(path)(e.error))?;
    Ok(())
}

fn render<I, R>(path: &Path, header: &[String], rows: I) -> Result<Vec<u8>, TableError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let csv_error = |source| TableError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_error)?;
    for row in rows {
        w.write_record(row).map_err(csv_error)?;
    }
    w.into_inner().map_err(|e| io_error(path)(e.into_error()))
}

/// Writes arbitrary string records under `header`.
pub fn write_records(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), TableError> {
    let header: Vec<String> = header.iter().map(|h| h.to_string()).collect();
    let bytes = render(path, &header, rows.iter().map(|r| r.iter().cloned()))?;
    write_atomic(path, &bytes)
}

/// A numeric table: `header` names the columns, every row has one number per
/// column.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn write(&self, path: &Path) -> Result<(), TableError> {
        let bytes = render(
            path,
            &self.header,
            self.rows
                .iter()
                .map(|r| r.iter().map(|&x| format_number(x)).collect::<Vec<_>>()),
        )?;
        write_atomic(path, &bytes)
    }

    pub fn read(path: &Path) -> Result<Self, TableError> {
        let csv_error = |source| TableError::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
        let header = r
            .headers()
            .map_err(csv_error)?
            .iter()
            .map(String::from)
            .collect();
        let mut rows = Vec::new();
        for (row, record) in r.records().enumerate() {
            let record = record.map_err(csv_error)?;
            let values = record
                .iter()
                .enumerate()
                .map(|(column, text)| {
                    text.trim().parse::<f64>().map_err(|_| TableError::Number {
                        path: path.to_path_buf(),
                        row,
                        column,
                        text: text.to_string(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(values);
        }
        Ok(Self { header, rows })
    }
}

/// A two-column `key,value` report.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub entries: Vec<(String, String)>,
}

impl Report {
    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn push_number(&mut self, key: impl Into<String>, value: f64) {
        self.entries.push((key.into(), format_number(value)));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn number(&self, key: &str) -> Option<f64> {
        self.get(key)?.parse().ok()
    }

    pub fn write(&self, path: &Path) -> Result<(), TableError> {
        let bytes = render(
            path,
            &["key".to_string(), "value".to_string()],
            self.entries.iter().map(|(k, v)| [k.clone(), v.clone()]),
        )?;
        write_atomic(path, &bytes)
    }

    pub fn read(path: &Path) -> Result<Self, TableError> {
        let csv_error = |source| TableError::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
        let mut entries = Vec::new();
        for record in r.records() {
            let record = record.map_err(csv_error)?;
            entries.push((
                record.get(0).unwrap_or_default().to_string(),
                record.get(1).unwrap_or_default().to_string(),
            ));
        }
        Ok(Self { entries })
    }
}
