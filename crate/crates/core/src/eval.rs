//! Class-agnostic mask recall and precision, COCO style.
//!
//! Matching is greedy by score: predictions are visited from the highest
//! score down, and each takes the unmatched ground-truth mask with the
//! highest IoU at or above the threshold (ties to the lower index). Recall at
//! a threshold is the fraction of ground truth matched; AR averages that over
//! the threshold list. Size buckets restrict the ground truth counted, not
//! the matching.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::label::PseudoLabel;
use crate::{Error, Result};

pub const SMALL_AREA: u64 = 32 * 32;
pub const MEDIUM_AREA: u64 = 96 * 96;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub max_predictions: usize,
    pub iou_thresholds: Vec<f64>,
}

/// `0.50, 0.55, ..., 0.95`, each computed as `k / 100` so that e.g. an IoU
/// of exactly `60 / 100` meets the `0.60` threshold.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { max_predictions: 1000, iou_thresholds: coco_thresholds() }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        let t = &self.iou_thresholds;
        if t.is_empty() {
            return Err(Error::InvalidConfig("no iou thresholds"));
        }
        if let Some(&bad) = t.iter().find(|&&v| !(0.5..=0.95).contains(&v)) {
            return Err(Error::OutOfRange { what: "iou threshold", value: bad });
        }
        if t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig("iou thresholds must be strictly increasing"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeBucket {
    Small,
    Medium,
    Large,
}

impl SizeBucket {
    pub fn of(area_px: u64) -> Self {
        if area_px < SMALL_AREA {
            SizeBucket::Small
        } else if area_px < MEDIUM_AREA {
            SizeBucket::Medium
        } else {
            SizeBucket::Large
        }
    }
}

/// One-to-one assignment between predictions and ground truth.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Matching {
    pub pred_to_gt: Vec<Option<usize>>,
    pub gt_to_pred: Vec<Option<usize>>,
}

impl Matching {
    pub fn matched(&self) -> usize {
        self.gt_to_pred.iter().filter(|m| m.is_some()).count()
    }
}

/// `ious[p][g]` for every prediction/ground-truth pair.
pub fn iou_table(preds: &[PseudoLabel], gts: &[PseudoLabel]) -> Result<Vec<Vec<f64>>> {
    preds.iter().map(|p| gts.iter().map(|g| p.iou(g)).collect()).collect()
}

fn greedy(ious: &[Vec<f64>], gt_count: usize, iou_t: f64) -> Matching {
    let mut m = Matching { pred_to_gt: vec![None; ious.len()], gt_to_pred: vec![None; gt_count] };
    for (p, row) in ious.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (g, &iou) in row.iter().enumerate() {
            if m.gt_to_pred[g].is_some() || iou < iou_t {
                continue;
            }
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        if let Some((g, _)) = best {
            m.pred_to_gt[p] = Some(g);
            m.gt_to_pred[g] = Some(p);
        }
    }
    m
}

/// Greedy matching of `preds` (already in descending score order) against
/// `gts` at one IoU threshold.
pub fn match_image(preds: &[PseudoLabel], gts: &[PseudoLabel], iou_t: f64) -> Result<Matching> {
    Ok(greedy(&iou_table(preds, gts)?, gts.len(), iou_t))
}

/// Sorts by descending score (stable) and keeps the first `max`.
pub fn rank_predictions(preds: &[PseudoLabel], max: usize) -> Result<Vec<PseudoLabel>> {
    if let Some(index) = preds.iter().position(|p| p.score.is_none()) {
        return Err(Error::MissingScore { index });
    }
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.unwrap().total_cmp(&preds[a].score.unwrap()));
    Ok(order.into_iter().take(max).map(|i| preds[i].clone()).collect())
}

/// Scores for unscored labels: area-descending rank mapped to `(0, 1]`, the
/// largest mask getting 1. Equal areas keep input order.
pub fn rank_scores(labels: &mut [PseudoLabel]) {
    let n = labels.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| labels[b].area_px.cmp(&labels[a].area_px));
    for (rank, i) in order.into_iter().enumerate() {
        labels[i].score = Some((n - rank) as f64 / n as f64);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageCounts {
    pub image_id: String,
    pub predictions: usize,
    pub ground_truth: usize,
    /// Matched ground truth at each IoU threshold.
    pub matched: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub ar: f64,
    pub ar_small: Option<f64>,
    pub ar_medium: Option<f64>,
    pub ar_large: Option<f64>,
    pub ap: f64,
    pub images: Vec<ImageCounts>,
}

#[derive(Default, Clone)]
struct RecallTally {
    total: usize,
    matched: Vec<usize>,
}

impl RecallTally {
    fn ar(&self) -> Option<f64> {
        if self.total == 0 {
            return None;
        }
        let n = self.matched.len() as f64;
        Some(self.matched.iter().map(|&m| m as f64 / self.total as f64).sum::<f64>() / n)
    }
}

/// Dataset-level AR/AP. Images present in `gts` but absent from `preds` count
/// as having no predictions; a prediction image id unknown to `gts` is an
/// error. Buckets without ground truth report `None`.
pub fn average_recall(
    preds: &BTreeMap<String, Vec<PseudoLabel>>,
    gts: &BTreeMap<String, Vec<PseudoLabel>>,
    cfg: &EvalConfig,
) -> Result<EvalResult> {
    cfg.validate()?;
    if let Some(id) = preds.keys().find(|id| !gts.contains_key(*id)) {
        return Err(Error::UnknownImage(id.clone()));
    }
    let nt = cfg.iou_thresholds.len();
    let blank = RecallTally { total: 0, matched: vec![0; nt] };
    let (mut all, mut small, mut medium, mut large) =
        (blank.clone(), blank.clone(), blank.clone(), blank);
    // Per threshold: (score, image order, rank, is true positive).
    let mut detections: Vec<Vec<(f64, usize, usize, bool)>> = vec![Vec::new(); nt];
    let mut images = Vec::with_capacity(gts.len());
    let empty = Vec::new();

    for (image_index, (id, gt)) in gts.iter().enumerate() {
        let ranked = rank_predictions(preds.get(id).unwrap_or(&empty), cfg.max_predictions)?;
        let ious = iou_table(&ranked, gt)?;
        let buckets: Vec<SizeBucket> = gt.iter().map(|g| SizeBucket::of(g.area_px)).collect();
        all.total += gt.len();
        for b in &buckets {
            match b {
                SizeBucket::Small => small.total += 1,
                SizeBucket::Medium => medium.total += 1,
                SizeBucket::Large => large.total += 1,
            }
        }
        let mut matched_counts = Vec::with_capacity(nt);
        for (t, &iou_t) in cfg.iou_thresholds.iter().enumerate() {
            let m = greedy(&ious, gt.len(), iou_t);
            for (g, hit) in m.gt_to_pred.iter().enumerate() {
                if hit.is_some() {
                    all.matched[t] += 1;
                    match buckets[g] {
                        SizeBucket::Small => small.matched[t] += 1,
                        SizeBucket::Medium => medium.matched[t] += 1,
                        SizeBucket::Large => large.matched[t] += 1,
                    }
                }
            }
            for (rank, (p, hit)) in ranked.iter().zip(&m.pred_to_gt).enumerate() {
                detections[t].push((p.score.unwrap(), image_index, rank, hit.is_some()));
            }
            matched_counts.push(m.matched());
        }
        images.push(ImageCounts {
            image_id: id.clone(),
            predictions: ranked.len(),
            ground_truth: gt.len(),
            matched: matched_counts,
        });
    }

    let ap = detections
        .iter_mut()
        .map(|dets| average_precision(dets, all.total))
        .sum::<f64>()
        / nt as f64;

    Ok(EvalResult {
        ar: all.ar().unwrap_or(0.0),
        ar_small: small.ar(),
        ar_medium: medium.ar(),
        ar_large: large.ar(),
        ap,
        images,
    })
}

/// 101-point interpolated precision averaged over recall levels.
fn average_precision(dets: &mut [(f64, usize, usize, bool)], positives: usize) -> f64 {
    if positives == 0 {
        return 0.0;
    }
    dets.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut tp = 0usize;
    let mut recall = Vec::with_capacity(dets.len());
    let mut precision = Vec::with_capacity(dets.len());
    for (k, d) in dets.iter().enumerate() {
        if d.3 {
            tp += 1;
        }
        recall.push(tp as f64 / positives as f64);
        precision.push(tp as f64 / (k + 1) as f64);
    }
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let mut sum = 0.0;
    for step in 0..=100 {
        let r = step as f64 / 100.0;
        let idx = recall.partition_point(|&v| v < r);
        if idx < precision.len() {
            sum += precision[idx];
        }
    }
    sum / 101.0
}
