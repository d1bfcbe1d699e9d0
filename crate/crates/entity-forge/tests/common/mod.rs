#![allow(dead_code)]

use std::path::{Path, PathBuf};

use entity_forge::fsio;
use entity_forge::manifest::ImageRecord;
use entity_forge_core::FeatureGrid;

pub const WORKING: usize = 1024;

/// Left and right halves plus a 3x3-patch speck that is re-clustered
/// locally through exactly one window.
pub fn two_blocks() -> FeatureGrid {
    let a = [1.0f32, 0.3, 0.0];
    let b = [0.3f32, 1.0, 0.0];
    let s = [0.2f32, 0.0, 1.0];
    FeatureGrid::from_fn(128, 128, 3, 8, |r, c, k| {
        if (20..23).contains(&r) && (10..13).contains(&c) {
            s[k]
        } else if c < 64 {
            a[k]
        } else {
            b[k]
        }
    })
    .unwrap()
}

pub fn record(id: &str, working: Option<usize>) -> ImageRecord {
    ImageRecord {
        image_id: id.to_string(),
        feature_path: PathBuf::from(format!("features/{id}.sfg")),
        original_height_px: 300,
        original_width_px: 400,
        working_size_px: working,
    }
}

/// Writes each grid under `dir/features` and a manifest listing them.
pub fn write_dataset(dir: &Path, images: &[(&str, &FeatureGrid)]) -> PathBuf {
    fsio::create_dir(&dir.join("features")).unwrap();
    let mut text = String::new();
    for (id, grid) in images {
        fsio::write_feature_grid(&dir.join(format!("features/{id}.sfg")), grid).unwrap();
        text.push_str(&serde_json::to_string(&record(id, Some(WORKING))).unwrap());
        text.push('\n');
    }
    let manifest = dir.join("manifest.jsonl");
    std::fs::write(&manifest, text).unwrap();
    manifest
}
