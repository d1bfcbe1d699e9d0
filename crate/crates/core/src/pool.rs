//! Mixing of threshold snapshots and duplicate removal by mask NMS.

use alloc::vec::Vec;

use crate::cluster::{regions_to_masks, Snapshot};
use crate::label::PseudoLabel;
use crate::{Error, Result};

/// Order in which NMS visits candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NmsOrdering {
    /// Largest mask first.
    #[default]
    AreaDesc,
    /// Coarsest snapshot (lowest merge threshold) first, then largest.
    ThresholdThenArea,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmsConfig {
    pub iou_threshold: f64,
    pub ordering: NmsOrdering,
}

impl Default for NmsConfig {
    fn default() -> Self {
        Self { iou_threshold: 0.9, ordering: NmsOrdering::AreaDesc }
    }
}

impl NmsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::OutOfRange { what: "nms iou threshold", value: self.iou_threshold });
        }
        Ok(())
    }
}

/// Concatenates every snapshot's regions into one pool, preserving each
/// label's merge threshold.
pub fn mix_snapshots(snapshots: &[Snapshot], patch_stride: usize) -> Vec<PseudoLabel> {
    snapshots.iter().flat_map(|s| regions_to_masks(s, patch_stride)).collect()
}

/// Indices of `pool` in the order NMS visits them. The sort is stable.
pub fn nms_order(pool: &[PseudoLabel], ordering: NmsOrdering) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pool.len()).collect();
    match ordering {
        NmsOrdering::AreaDesc => order.sort_by(|&i, &j| pool[j].area_px.cmp(&pool[i].area_px)),
        NmsOrdering::ThresholdThenArea => order.sort_by(|&i, &j| {
            pool[i]
                .merge_threshold
                .total_cmp(&pool[j].merge_threshold)
                .then(pool[j].area_px.cmp(&pool[i].area_px))
        }),
    }
    order
}

/// Greedy suppression: a mask is kept iff its IoU with every mask kept so
/// far is below the threshold. Returns indices into `pool` in visit order.
pub fn mask_nms_indices(pool: &[PseudoLabel], cfg: &NmsConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    if let Some(first) = pool.first() {
        let dims = first.mask.dims();
        if let Some(bad) = pool.iter().find(|l| l.mask.dims() != dims) {
            return Err(Error::DimensionMismatch { left: dims, right: bad.mask.dims() });
        }
    }
    let mut kept: Vec<usize> = Vec::new();
    for i in nms_order(pool, cfg.ordering) {
        let candidate = &pool[i];
        let mut suppressed = false;
        for &k in &kept {
            let other = &pool[k];
            // IoU <= min/max area, so pairs with very different sizes can be
            // skipped without touching the runs.
            let (lo, hi) = if candidate.area_px < other.area_px {
                (candidate.area_px, other.area_px)
            } else {
                (other.area_px, candidate.area_px)
            };
            if hi > 0 && (lo as f64 / hi as f64) < cfg.iou_threshold {
                continue;
            }
            if candidate.iou(other)? >= cfg.iou_threshold {
                suppressed = true;
                break;
            }
        }
        if !suppressed {
            kept.push(i);
        }
    }
    Ok(kept)
}

pub fn mask_nms(pool: &[PseudoLabel], cfg: &NmsConfig) -> Result<Vec<PseudoLabel>> {
    Ok(mask_nms_indices(pool, cfg)?.into_iter().map(|i| pool[i].clone()).collect())
}
