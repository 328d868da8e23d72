//! CSV tables and key-value reports.
//!
//! Numbers are written in Rust's shortest round-trip exponent form
//! (`1.551e6`), so reading a table and writing it again reproduces the file
//! byte for byte.

use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {message}")]
    Schema { path: PathBuf, message: String },
}

/// Formats a number the way every table and report writes it.
pub fn fmt_num(v: f64) -> String {
    format!("{v:e}")
}

/// A rectangular table with named columns. Cells are kept as text so that
/// non-numeric columns (mode labels, status words) fit alongside numbers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn push_nums(&mut self, row: &[f64]) {
        self.push(row.iter().map(|&v| fmt_num(v)).collect());
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// A column parsed as numbers; unparsable cells become NaN.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.index_of(name)?;
        Some(self.rows.iter().map(|r| r[k].trim().parse().unwrap_or(f64::NAN)).collect())
    }

    /// Like [`Table::column`] but an absent column is a schema error naming `origin`.
    pub fn require(&self, name: &str, origin: &Path) -> Result<Vec<f64>, IoError> {
        self.column(name).ok_or_else(|| IoError::Schema {
            path: origin.to_path_buf(),
            message: format!("missing column `{name}` (have: {})", self.columns.join(", ")),
        })
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("writing to memory");
        for r in &self.rows {
            w.write_record(r).expect("writing to memory");
        }
        String::from_utf8(w.into_inner().expect("flushing memory")).expect("CSV of UTF-8 cells")
    }

    pub fn parse_csv(text: &str, origin: &Path) -> Result<Self, IoError> {
        let csv_err = |source| IoError::Csv { path: origin.to_path_buf(), source };
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let columns: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec.map_err(csv_err)?.iter().map(str::to_string).collect());
        }
        Ok(Self { columns, rows })
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path).map_err(|source| IoError::Io { path: path.to_path_buf(), source })?;
        Self::parse_csv(&text, path)
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        write_text(path, &self.to_csv_string())
    }
}

/// Writes a file, creating its parent directory when needed.
pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    let io = |source| IoError::Io { path: path.to_path_buf(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, text).map_err(io)
}

/// Ordered `key = value` report, valid TOML.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    entries: Vec<(String, String)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num(&mut self, key: &str, v: f64) -> &mut Self {
        let text = if v.is_finite() {
            fmt_num(v)
        } else if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
        self.entries.push((key.into(), text));
        self
    }

    pub fn int(&mut self, key: &str, v: i64) -> &mut Self {
        self.entries.push((key.into(), v.to_string()));
        self
    }

    pub fn flag(&mut self, key: &str, v: bool) -> &mut Self {
        self.entries.push((key.into(), v.to_string()));
        self
    }

    pub fn text(&mut self, key: &str, v: &str) -> &mut Self {
        self.entries.push((key.into(), toml::Value::String(v.into()).to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_num(&self, key: &str) -> Option<f64> {
        self.get(key)?.parse().ok()
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Parses a report previously written by [`Report::render`].
    pub fn parse(text: &str) -> Self {
        let entries = text
            .lines()
            .filter_map(|l| l.split_once(" = "))
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .collect();
        Self { entries }
    }
}
