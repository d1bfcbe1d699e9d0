//! File exchange with the feature exporter and with external refiners.
//!
//! Crop requests go out as JSON lines; each answer is an SFG1 file named
//! `<request_id>.sfg` in a response directory. Refinement requests go out as
//! JSON lines `{image_id, label_index}`; each answer is a mask
//! `{h, w, runs}` stored as `<image_id>_<label_index>.json`.

use std::path::{Path, PathBuf};

use entity_forge_core::local::{LocalFeatureSource, LocalWindow};
use entity_forge_core::refine::MaskRefiner;
use entity_forge_core::{Error, FeatureGrid, PseudoLabel, RleMask};
use serde::{Deserialize, Serialize};

use crate::labels::MaskRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub x: usize,
    pub y: usize,
    pub side: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRequest {
    pub image_id: String,
    pub window: WindowRecord,
    pub request_id: String,
}

impl CropRequest {
    pub fn new(image_id: &str, w: &LocalWindow) -> Self {
        CropRequest {
            image_id: image_id.to_string(),
            window: WindowRecord { x: w.x, y: w.y, side: w.side },
            request_id: w.request_id(image_id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefineRequest {
    pub image_id: String,
    pub label_index: usize,
}

impl RefineRequest {
    pub fn response_name(&self) -> String {
        refine_response_name(&self.image_id, self.label_index)
    }
}

pub fn refine_response_name(image_id: &str, label_index: usize) -> String {
    format!("{image_id}_{label_index}.json")
}

/// Local grids answered by the exporter.
pub struct ResponseDirSource<'a> {
    pub dir: &'a Path,
    pub image_id: &'a str,
}

impl ResponseDirSource<'_> {
    pub fn path_for(&self, window: &LocalWindow) -> PathBuf {
        self.dir.join(format!("{}.sfg", window.request_id(self.image_id)))
    }
}

impl LocalFeatureSource for ResponseDirSource<'_> {
    fn local_features(&self, window: &LocalWindow) -> entity_forge_core::Result<FeatureGrid> {
        let path = self.path_for(window);
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::PendingCrop { request_id: window.request_id(self.image_id) })
            }
            Err(e) => return Err(Error::Source(format!("{}: {e}", path.display()))),
        };
        let grid = FeatureGrid::from_sfg1(&bytes).map_err(|e| Error::Source(format!("{}: {e}", path.display())))?;
        if grid.height() != window.grid_side || grid.width() != window.grid_side {
            return Err(Error::DimensionMismatch {
                left: (grid.height(), grid.width()),
                right: (window.grid_side, window.grid_side),
            });
        }
        Ok(grid)
    }
}

/// Refined masks read from an external refiner's output directory.
pub struct ExternalRefiner<'a> {
    pub dir: &'a Path,
    pub image_id: &'a str,
}

impl ExternalRefiner<'_> {
    pub fn path_for(&self, index: usize) -> PathBuf {
        self.dir.join(refine_response_name(self.image_id, index))
    }

    /// Indices of `labels` that have no response yet.
    pub fn missing(&self, labels: &[PseudoLabel]) -> Vec<usize> {
        (0..labels.len()).filter(|&i| !self.path_for(i).exists()).collect()
    }
}

impl MaskRefiner for ExternalRefiner<'_> {
    fn refine(&self, index: usize, label: &PseudoLabel) -> entity_forge_core::Result<RleMask> {
        let path = self.path_for(index);
        let text = match std::fs::read(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::PendingRefine { request_id: refine_response_name(self.image_id, index) })
            }
            Err(e) => return Err(Error::Source(format!("{}: {e}", path.display()))),
        };
        let rec: MaskRecord =
            serde_json::from_slice(&text).map_err(|e| Error::Source(format!("{}: {e}", path.display())))?;
        let mask = RleMask::from_runs(rec.h, rec.w, rec.runs)?;
        if mask.dims() != label.mask.dims() {
            return Err(Error::DimensionMismatch { left: mask.dims(), right: label.mask.dims() });
        }
        Ok(mask)
    }
}
