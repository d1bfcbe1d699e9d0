//! Dataset manifest: one JSON object per line describing an image and its
//! feature file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageRecord {
    pub image_id: String,
    /// Relative paths resolve against the manifest's directory.
    pub feature_path: PathBuf,
    pub original_height_px: usize,
    pub original_width_px: usize,
    /// Falls back to the run configuration when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub working_size_px: Option<usize>,
}

impl ImageRecord {
    pub fn resolved_feature_path(&self, manifest_dir: &Path) -> PathBuf {
        if self.feature_path.is_absolute() {
            self.feature_path.clone()
        } else {
            manifest_dir.join(&self.feature_path)
        }
    }
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub dir: PathBuf,
    pub records: Vec<ImageRecord>,
}

/// Ids become file names, so they must be non-empty and free of path
/// separators.
pub fn valid_image_id(id: &str) -> bool {
    !id.is_empty() && id != "." && id != ".." && !id.contains(['/', '\\', '\0'])
}

pub fn parse_manifest(text: &str, path: &Path) -> Result<Vec<ImageRecord>> {
    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| CliError::Parse { path: path.to_path_buf(), line: i + 1, message };
        let record: ImageRecord = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        if !valid_image_id(&record.image_id) {
            return Err(parse_err(format!("invalid image_id {:?}", record.image_id)));
        }
        if record.original_height_px == 0 || record.original_width_px == 0 || record.working_size_px == Some(0) {
            return Err(parse_err("dimensions must be positive".into()));
        }
        if !seen.insert(record.image_id.clone()) {
            return Err(parse_err(format!("duplicate image_id {:?}", record.image_id)));
        }
        records.push(record);
    }
    Ok(records)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let records = parse_manifest(&text, path)?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Manifest { dir, records })
}
