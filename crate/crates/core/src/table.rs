//! Delimited text tables and the JSON run manifest written next to them.
//!
//! Layout: `#` comment lines, the last of which is `# columns: a,b,...`,
//! then one comma-separated record per line. Floats use the shortest
//! representation that parses back to the same bits; a missing value is an
//! empty field.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub comments: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            comments: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn comment(&mut self, line: impl Into<String>) {
        self.comments.push(line.into());
    }

    pub fn push(&mut self, row: Vec<Option<f64>>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.comments {
            out.push_str("# ");
            out.push_str(c);
            out.push('\n');
        }
        out.push_str("# columns: ");
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let fields: Vec<String> = row
                .iter()
                .map(|v| v.map(|x| format!("{x:e}")).unwrap_or_default())
                .collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(self.render().as_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut comments = Vec::new();
        let mut columns: Option<Vec<String>> = None;
        let mut rows = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if let Some(c) = line.strip_prefix('#') {
                let c = c.strip_prefix(' ').unwrap_or(c);
                if let Some(cols) = c.strip_prefix("columns: ") {
                    columns = Some(cols.split(',').map(str::to_string).collect());
                } else {
                    comments.push(c.to_string());
                }
                continue;
            }
            let width = columns
                .as_ref()
                .ok_or_else(|| Error::Parameter(format!("line {}: record before the column header", n + 1)))?
                .len();
            let row = line
                .split(',')
                .map(|f| {
                    if f.is_empty() {
                        Ok(None)
                    } else {
                        f.parse::<f64>()
                            .map(Some)
                            .map_err(|_| Error::Parameter(format!("line {}: bad number \"{f}\"", n + 1)))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            if row.len() != width {
                return Err(Error::Parameter(format!(
                    "line {}: {} fields, expected {width}",
                    n + 1,
                    row.len()
                )));
            }
            rows.push(row);
        }
        Ok(Self {
            comments,
            columns: columns.ok_or_else(|| Error::Parameter("missing column header".into()))?,
            rows,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// `<data>.manifest.json`.
pub fn manifest_path(data: &Path) -> PathBuf {
    let mut name = data.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    data.with_file_name(name)
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest<T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub data_file: String,
    pub wall_clock_seconds: f64,
    #[serde(flatten)]
    pub body: T,
}

pub fn write_manifest<T: Serialize>(data: &Path, command: &str, seconds: f64, body: T) -> Result<PathBuf> {
    let path = manifest_path(data);
    let m = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: command.to_string(),
        data_file: data
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        wall_clock_seconds: seconds,
        body,
    };
    let text =
        serde_json::to_string_pretty(&m).map_err(|e| Error::Numerical(format!("manifest serialization: {e}")))?;
    std::fs::write(&path, text)?;
    Ok(path)
}
