//! File helpers: atomic writes and SFG1 feature files.

use std::fs;
use std::io::Write;
use std::path::Path;

use entity_forge_core::FeatureGrid;

use crate::error::{CliError, Result};

/// Writes `bytes` to a sibling temporary file, syncs it, then renames it
/// over `path`, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| CliError::invalid(path, "not a file path"))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let mut file = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    file.write_all(bytes).map_err(|e| CliError::io(&tmp, e))?;
    file.sync_all().map_err(|e| CliError::io(&tmp, e))?;
    drop(file);
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        CliError::io(path, e)
    })
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::json(path, e))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::json(path, e))
}

pub fn read_feature_grid(path: &Path) -> Result<FeatureGrid> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    FeatureGrid::from_sfg1(&bytes).map_err(|e| CliError::format(path, e))
}

pub fn write_feature_grid(path: &Path, grid: &FeatureGrid) -> Result<()> {
    write_atomic(path, &grid.to_sfg1())
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

/// JSON-lines file, one serialized value per line.
pub fn write_jsonl<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut out, row).map_err(|e| CliError::json(path, e))?;
        out.push(b'\n');
    }
    write_atomic(path, &out)
}
