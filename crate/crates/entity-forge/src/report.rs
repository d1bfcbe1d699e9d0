//! Run report: per-image stage counts and timings plus their aggregate.

use std::collections::BTreeMap;

use entity_forge_core::explore::StageCounts;
use serde::{Deserialize, Serialize};

pub const REPORT_FILE: &str = "run_report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageStatus {
    Ok,
    /// Waiting on crop or refinement responses.
    Pending,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub snapshots_pool: usize,
    pub after_nms: usize,
    pub small: usize,
    pub large: usize,
    pub local_survivors: usize,
    pub initial: usize,
    pub after_gate: usize,
}

impl From<StageCounts> for Counts {
    fn from(c: StageCounts) -> Self {
        Counts {
            snapshots_pool: c.snapshots_pool,
            after_nms: c.after_nms,
            small: c.small,
            large: c.large,
            local_survivors: c.local_survivors,
            initial: c.initial,
            after_gate: c.after_gate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageReport {
    pub image_id: String,
    pub status: ImageStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub masks: usize,
    pub counts: Counts,
    pub stage_ms: BTreeMap<String, f64>,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub images: usize,
    pub succeeded: usize,
    pub pending: usize,
    pub failed: usize,
    pub masks_total: usize,
    /// Mean over succeeded images; 0 when none succeeded.
    pub masks_per_image: f64,
    pub time_per_image_ms: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub images: Vec<ImageReport>,
    pub aggregate: Aggregate,
}

impl RunReport {
    pub fn new(images: Vec<ImageReport>, wall_ms: f64) -> Self {
        let ok: Vec<&ImageReport> = images.iter().filter(|r| r.status == ImageStatus::Ok).collect();
        let masks_total: usize = ok.iter().map(|r| r.masks).sum();
        let mean = |total: f64| if ok.is_empty() { 0.0 } else { total / ok.len() as f64 };
        let aggregate = Aggregate {
            images: images.len(),
            succeeded: ok.len(),
            pending: images.iter().filter(|r| r.status == ImageStatus::Pending).count(),
            failed: images.iter().filter(|r| r.status == ImageStatus::Failed).count(),
            masks_total,
            masks_per_image: mean(masks_total as f64),
            time_per_image_ms: mean(ok.iter().map(|r| r.total_ms).sum()),
            wall_ms,
        };
        RunReport { images, aggregate }
    }

    pub fn all_ok(&self) -> bool {
        self.aggregate.succeeded == self.aggregate.images
    }
}
