//! Dataset evaluation of label directories.

use std::collections::BTreeMap;
use std::path::Path;

use entity_forge_core::eval::{average_recall, rank_scores, EvalConfig, EvalResult};
use entity_forge_core::PseudoLabel;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::labels::read_label_dir;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEval {
    pub image_id: String,
    pub predictions: usize,
    pub ground_truth: usize,
    pub matched: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ar: f64,
    pub ar_small: Option<f64>,
    pub ar_medium: Option<f64>,
    pub ar_large: Option<f64>,
    pub ap: f64,
    pub iou_thresholds: Vec<f64>,
    pub images: Vec<ImageEval>,
}

impl EvalReport {
    fn new(r: EvalResult, cfg: &EvalConfig) -> Self {
        EvalReport {
            ar: r.ar,
            ar_small: r.ar_small,
            ar_medium: r.ar_medium,
            ar_large: r.ar_large,
            ap: r.ap,
            iou_thresholds: cfg.iou_thresholds.clone(),
            images: r
                .images
                .into_iter()
                .map(|i| ImageEval {
                    image_id: i.image_id,
                    predictions: i.predictions,
                    ground_truth: i.ground_truth,
                    matched: i.matched,
                })
                .collect(),
        }
    }
}

type LabelSets = BTreeMap<String, Vec<PseudoLabel>>;

fn load(dir: &Path, scored: bool) -> Result<LabelSets> {
    let mut out = BTreeMap::new();
    for (id, (path, file)) in read_label_dir(dir)? {
        let (mut labels, _) = file.decode(&path)?;
        if scored {
            let unscored = labels.iter().filter(|l| l.score.is_none()).count();
            if unscored == labels.len() {
                rank_scores(&mut labels);
            } else if unscored > 0 {
                return Err(CliError::invalid(&path, "some labels have scores and others do not"));
            }
        }
        out.insert(id, labels);
    }
    Ok(out)
}

/// Evaluates every prediction file in `pred_dir` against `gt_dir`. Labels
/// without scores are ranked by area. Prediction ids absent from the ground
/// truth are an error; ground-truth images without predictions count as
/// missed.
pub fn run_eval(pred_dir: &Path, gt_dir: &Path, cfg: &EvalConfig) -> Result<EvalReport> {
    let preds = load(pred_dir, true)?;
    let gts = load(gt_dir, false)?;
    let unknown: Vec<&str> = preds.keys().filter(|id| !gts.contains_key(*id)).map(String::as_str).collect();
    if !unknown.is_empty() {
        return Err(CliError::invalid(pred_dir, format!("image ids missing from ground truth: {}", unknown.join(", "))));
    }
    for id in gts.keys().filter(|id| !preds.contains_key(*id)) {
        log::warn!("{id}: no predictions");
    }
    Ok(EvalReport::new(average_recall(&preds, &gts, cfg)?, cfg))
}
