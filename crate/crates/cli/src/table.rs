//! CSV tables with a leading `#` provenance line.

use std::path::{Path, PathBuf};

use crate::config::Seeds;
use crate::error::{CliError, Result};

/// Shortest round-trip representation in scientific notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:e}")
}

/// The comment line heading every artifact.
pub fn provenance(config_hash: &str, seeds: &Seeds) -> String {
    format!(
        "regcert {} config_hash={config_hash} seeds: {seeds}",
        env!("CARGO_PKG_VERSION")
    )
}

pub fn write_csv(
    path: &Path,
    provenance: &str,
    columns: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(format!("# {provenance}\n").as_bytes());
    {
        let mut w = csv::Writer::from_writer(&mut out);
        let io = |e: csv::Error| CliError::schema(path, e.to_string());
        w.write_record(columns).map_err(io)?;
        for row in rows {
            debug_assert_eq!(row.len(), columns.len());
            w.write_record(row).map_err(io)?;
        }
        w.flush().map_err(CliError::io(path))?;
    }
    std::fs::write(path, out).map_err(CliError::io(path))
}

#[derive(Clone, Debug)]
pub struct Table {
    pub path: PathBuf,
    /// The `#` line without its marker, if present.
    pub provenance: Option<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let provenance = text
            .lines()
            .next()
            .and_then(|l| l.strip_prefix('#'))
            .map(|l| l.trim().to_string());
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let schema = |e: csv::Error| CliError::schema(path, e.to_string());
        let columns: Vec<String> = r
            .headers()
            .map_err(schema)?
            .iter()
            .map(str::to_string)
            .collect();
        if columns.iter().all(|c| c.is_empty()) {
            return Err(CliError::schema(path, "missing header row"));
        }
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<Vec<Vec<String>>, _>>()
            .map_err(schema)?;
        Ok(Self {
            path: path.to_path_buf(),
            provenance,
            columns,
            rows,
        })
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.iter().any(|c| c == name)
    }

    fn index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| CliError::schema(&self.path, format!("missing column `{name}`")))
    }

    pub fn strings(&self, name: &str) -> Result<Vec<String>> {
        let i = self.index(name)?;
        Ok(self.rows.iter().map(|r| r[i].clone()).collect())
    }

    pub fn floats(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(k, r)| {
                r[i].parse::<f64>().map_err(|_| {
                    CliError::schema(
                        &self.path,
                        format!("row {}: column `{name}` is not a number: {:?}", k + 1, r[i]),
                    )
                })
            })
            .collect()
    }
}
