//! CSV and JSON writers for run artifacts.
//!
//! Floats go to CSV as `{:.16e}` (17 significant digits); JSON uses the
//! shortest representation that round-trips, which is equally exact.

use std::fs;
use std::path::{Path, PathBuf};

use iesis_core::DMatrix;
use serde::Serialize;

use crate::error::{ExperimentError, Result};

pub(crate) fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn output_error(path: &Path, e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Output {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

pub(crate) fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| ExperimentError::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| ExperimentError::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| output_error(path, e))?;
    write_text(path, &(text + "\n"))
}

/// Rows are written with a header; every cell is a string already.
pub(crate) fn write_rows(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| output_error(path, e))?;
    w.write_record(header).map_err(|e| output_error(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| output_error(path, e))?;
    }
    w.flush().map_err(|e| ExperimentError::io(path, e))
}

/// One row per matrix row, one column per member: `label,m0,m1,...`.
pub(crate) fn write_matrix(path: &Path, label: &str, m: &DMatrix<f64>) -> Result<()> {
    let header: Vec<String> = std::iter::once(label.to_string())
        .chain((0..m.ncols()).map(|j| format!("m{j}")))
        .collect();
    let rows = m
        .row_iter()
        .enumerate()
        .map(|(i, r)| std::iter::once(i.to_string()).chain(r.iter().map(|v| fmt(*v))).collect());
    write_rows(path, &header, rows)
}

pub(crate) fn iteration_dir(root: &Path, iteration: usize) -> PathBuf {
    root.join(format!("iter_{iteration:03}"))
}

/// Removes artifacts of an earlier run so stale iterations never mix with
/// new ones. Files the runner does not produce are left alone.
pub(crate) fn clear_previous(root: &Path) -> Result<()> {
    let entries = match fs::read_dir(root) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(ExperimentError::io(root, e)),
    };
    for entry in entries {
        let entry = entry.map_err(|e| ExperimentError::io(root, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let path = entry.path();
        let ours_dir = name.starts_with("iter_") && name[5..].chars().all(|c| c.is_ascii_digit());
        if ours_dir && path.is_dir() {
            fs::remove_dir_all(&path).map_err(|e| ExperimentError::io(&path, e))?;
        } else if crate::runner::RUN_FILES.contains(&name.as_str()) {
            fs::remove_file(&path).map_err(|e| ExperimentError::io(&path, e))?;
        }
    }
    Ok(())
}
