//! CSV tables and their `.meta` sidecars.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rabi_otto::table::Table;
use thiserror::Error;

use crate::config::{Config, PROVENANCE_SECTION};

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{0} exists; pass --force to overwrite")]
    Exists(PathBuf),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io { path: path.to_owned(), source }
}

/// Sidecar path: `x.csv` gives `x.csv.meta`.
pub fn meta_path(csv: &Path) -> PathBuf {
    let mut name = csv.as_os_str().to_owned();
    name.push(".meta");
    PathBuf::from(name)
}

/// Fail if `csv` or its sidecar exists and `force` is off.
pub fn check_writable(csv: &Path, force: bool) -> Result<(), OutputError> {
    if !force {
        for p in [csv.to_owned(), meta_path(csv)] {
            if p.exists() {
                return Err(OutputError::Exists(p));
            }
        }
    }
    Ok(())
}

/// Write `table` as CSV with a header row; creates parent directories.
pub fn write_csv(table: &Table, path: &Path, force: bool) -> Result<(), OutputError> {
    check_writable(path, force)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io(dir))?;
    }
    let csv_err = |source| OutputError::Csv { path: path.to_owned(), source };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(table.columns()).map_err(csv_err)?;
    for row in table.rows() {
        w.write_record(row.iter().map(|c| c.to_string())).map_err(csv_err)?;
    }
    w.flush().map_err(io(path))
}

/// Write the sidecar of `csv`: provenance lines, then the effective configuration.
pub fn write_meta(csv: &Path, provenance: &[(String, String)], config: &Config) -> Result<PathBuf, OutputError> {
    let path = meta_path(csv);
    let mut f = fs::File::create(&path).map_err(io(&path))?;
    let mut text = format!("[{PROVENANCE_SECTION}]\n");
    for (k, v) in provenance {
        text.push_str(&format!("{k} = {v}\n"));
    }
    text.push('\n');
    text.push_str(&config.to_string());
    f.write_all(text.as_bytes()).map_err(io(&path))?;
    Ok(path)
}
