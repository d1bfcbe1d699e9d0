//! Per-image pseudo-label JSON files. Ground truth uses the same schema.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use entity_forge_core::hierarchy::HierarchyForest;
use entity_forge_core::{PseudoLabel, RleMask, Stage};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::fsio;
use crate::manifest::valid_image_id;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskRecord {
    pub h: usize,
    pub w: usize,
    pub runs: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelRecord {
    pub mask: MaskRecord,
    pub area: u64,
    /// `[x, y, w, h]` in working-image pixels.
    pub bbox: [usize; 4],
    pub stage: String,
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelFile {
    pub image_id: String,
    pub original_height_px: usize,
    pub original_width_px: usize,
    pub working_size_px: usize,
    pub labels: Vec<LabelRecord>,
}

impl LabelRecord {
    pub fn from_label(label: &PseudoLabel, parent: Option<usize>) -> Self {
        let b = label.bbox;
        LabelRecord {
            mask: MaskRecord { h: label.mask.height(), w: label.mask.width(), runs: label.mask.runs().to_vec() },
            area: label.area_px,
            bbox: [b.x, b.y, b.w, b.h],
            stage: label.stage.as_str().to_string(),
            threshold: label.merge_threshold,
            score: label.score,
            parent_index: parent,
        }
    }

    /// Rebuilds the label, checking that the stored area and box agree with
    /// the mask.
    pub fn to_label(&self) -> std::result::Result<PseudoLabel, String> {
        let mask = RleMask::from_runs(self.mask.h, self.mask.w, self.mask.runs.clone()).map_err(|e| e.to_string())?;
        let stage = Stage::parse(&self.stage).ok_or_else(|| format!("unknown stage {:?}", self.stage))?;
        let mut label = PseudoLabel::new(mask, stage, self.threshold);
        if label.area_px != self.area {
            return Err(format!("area {} does not match mask area {}", self.area, label.area_px));
        }
        let b = label.bbox;
        if [b.x, b.y, b.w, b.h] != self.bbox {
            return Err(format!("bbox {:?} is not the tight box {:?}", self.bbox, [b.x, b.y, b.w, b.h]));
        }
        if let Some(s) = self.score {
            if !(0.0..=1.0).contains(&s) {
                return Err(format!("score {s} outside [0, 1]"));
            }
            label = label.with_score(s);
        }
        Ok(label)
    }
}

impl LabelFile {
    pub fn new(
        image_id: &str,
        original: (usize, usize),
        working_size_px: usize,
        labels: &[PseudoLabel],
        forest: Option<&HierarchyForest>,
    ) -> Self {
        LabelFile {
            image_id: image_id.to_string(),
            original_height_px: original.0,
            original_width_px: original.1,
            working_size_px,
            labels: labels
                .iter()
                .enumerate()
                .map(|(i, l)| LabelRecord::from_label(l, forest.and_then(|f| f.parent[i])))
                .collect(),
        }
    }

    pub fn file_name(image_id: &str) -> String {
        format!("{image_id}.json")
    }

    /// Labels and the parent links stored with them.
    pub fn decode(&self, path: &Path) -> Result<(Vec<PseudoLabel>, Vec<Option<usize>>)> {
        let n = self.labels.len();
        let mut labels = Vec::with_capacity(n);
        let mut parents = Vec::with_capacity(n);
        for (i, rec) in self.labels.iter().enumerate() {
            let label = rec.to_label().map_err(|m| CliError::invalid(path, format!("label {i}: {m}")))?;
            if label.mask.dims() != (self.working_size_px, self.working_size_px) {
                return Err(CliError::invalid(path, format!("label {i}: mask is not working-size")));
            }
            if let Some(p) = rec.parent_index {
                if p >= n || p == i {
                    return Err(CliError::invalid(path, format!("label {i}: bad parent_index {p}")));
                }
            }
            labels.push(label);
            parents.push(rec.parent_index);
        }
        Ok((labels, parents))
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(Self::file_name(&self.image_id));
        fsio::write_json(&path, self)?;
        Ok(path)
    }
}

pub fn read_label_file(path: &Path) -> Result<LabelFile> {
    let file: LabelFile = fsio::read_json(path)?;
    if !valid_image_id(&file.image_id) {
        return Err(CliError::invalid(path, format!("invalid image_id {:?}", file.image_id)));
    }
    Ok(file)
}

/// Every `*.json` label file in `dir`, keyed by image id. Files are read in
/// name order and other files (such as the run report) are skipped.
pub fn read_label_dir(dir: &Path) -> Result<BTreeMap<String, (PathBuf, LabelFile)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| CliError::io(dir, e)))
        .collect::<Result<_>>()?;
    paths.sort();
    let mut out = BTreeMap::new();
    for path in paths {
        let is_json = path.extension().is_some_and(|e| e == "json");
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        if !is_json || name.starts_with('.') || name == crate::report::REPORT_FILE {
            continue;
        }
        let file = read_label_file(&path)?;
        if let Some((prev, _)) = out.get(&file.image_id) {
            let prev: &PathBuf = prev;
            return Err(CliError::invalid(&path, format!("image_id {:?} also in {}", file.image_id, prev.display())));
        }
        out.insert(file.image_id.clone(), (path, file));
    }
    Ok(out)
}
