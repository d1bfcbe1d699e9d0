//! Batch self-exploration over a manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use entity_forge_core::explore::{
    finish_exploration, initial_labels, plan_windows, PipelineConfig, StageCounts, StageKind, StageObserver,
};
use entity_forge_core::local::{LocalFeatureSource, ProxySource};
use entity_forge_core::refine::{MaskRefiner, MorphRefiner, RefinerKind};
use entity_forge_core::{Error, FeatureGrid};

use crate::config::{FeatureMode, RunConfig};
use crate::error::{CliError, Result};
use crate::exchange::{CropRequest, ExternalRefiner, RefineRequest, ResponseDirSource};
use crate::fsio;
use crate::labels::LabelFile;
use crate::manifest::{ImageRecord, Manifest};
use crate::report::{ImageReport, ImageStatus, RunReport, REPORT_FILE};
use crate::workers::map_parallel;

pub const CROP_REQUESTS_FILE: &str = "crop_requests.jsonl";
pub const REFINE_REQUESTS_FILE: &str = "refine_requests.jsonl";
/// Initial labels awaiting external refinement, one label file per image.
pub const REFINE_INPUTS_DIR: &str = "refine_inputs";

#[derive(Debug)]
pub struct ExploreOutcome {
    pub report: RunReport,
    pub crop_requests: Vec<CropRequest>,
    pub refine_requests: Vec<RefineRequest>,
}

#[derive(Default)]
struct Timer {
    started: Option<Instant>,
    stage_ms: BTreeMap<String, f64>,
}

impl StageObserver for Timer {
    fn begin(&mut self, _stage: StageKind) {
        self.started = Some(Instant::now());
    }

    fn end(&mut self, stage: StageKind, _count: usize) {
        if let Some(t) = self.started.take() {
            *self.stage_ms.entry(stage.as_str().to_string()).or_default() += t.elapsed().as_secs_f64() * 1e3;
        }
    }
}

struct ImageOutcome {
    report: ImageReport,
    crops: Vec<CropRequest>,
    refines: Vec<RefineRequest>,
}

/// Pipeline settings for one image: its own working size wins over the run
/// default.
pub fn image_config(record: &ImageRecord, cfg: &RunConfig) -> PipelineConfig {
    let mut p = cfg.pipeline.clone();
    if let Some(s) = record.working_size_px {
        p.working_size_px = s;
    }
    p
}

fn explore_one(record: &ImageRecord, manifest_dir: &Path, cfg: &RunConfig, out: &Path) -> ImageOutcome {
    let started = Instant::now();
    let mut timer = Timer::default();
    let mut counts = StageCounts::default();
    let mut crops = Vec::new();
    let mut refines = Vec::new();
    let id = record.image_id.as_str();

    let result = (|| -> std::result::Result<Option<usize>, String> {
        let pcfg = image_config(record, cfg);
        pcfg.validate().map_err(|e| e.to_string())?;
        let path = record.resolved_feature_path(manifest_dir);
        let grid = fsio::read_feature_grid(&path).map_err(|e| e.to_string())?;
        pcfg.check_grid(&grid).map_err(|e| format!("{}: {e}", path.display()))?;

        let proxy;
        let response;
        let source: &dyn LocalFeatureSource = match cfg.feature_mode {
            FeatureMode::Proxy => {
                proxy = ProxySource { global: &grid, local_size_px: pcfg.local_size_px };
                &proxy
            }
            FeatureMode::Exporter => {
                let dir = cfg.crop_response_dir.as_deref().ok_or("exporter mode needs a crop response directory")?;
                response = ResponseDirSource { dir, image_id: id };
                &response
            }
        };
        let initial = match initial_labels(&grid, &pcfg, source, &mut counts, &mut timer) {
            Ok(v) => v,
            Err(Error::PendingCrop { .. }) => {
                let dir = cfg.crop_response_dir.as_deref().unwrap_or(Path::new(""));
                crops = missing_crops(&grid, &pcfg, &ResponseDirSource { dir, image_id: id });
                return Ok(None);
            }
            Err(e) => return Err(e.to_string()),
        };

        let external;
        let refiner: &dyn MaskRefiner = match pcfg.refine.refiner {
            RefinerKind::BuiltinMorph => &MorphRefiner,
            RefinerKind::External => {
                let dir = cfg.external_refine_dir.as_deref().ok_or("external refiner needs a directory")?;
                external = ExternalRefiner { dir, image_id: id };
                let missing = external.missing(&initial);
                if !missing.is_empty() {
                    let inputs = out.join(REFINE_INPUTS_DIR);
                    fsio::create_dir(&inputs).map_err(|e| e.to_string())?;
                    let file = LabelFile::new(
                        id,
                        (record.original_height_px, record.original_width_px),
                        pcfg.working_size_px,
                        &initial,
                        None,
                    );
                    file.write(&inputs).map_err(|e| e.to_string())?;
                    refines = missing.into_iter().map(|i| RefineRequest { image_id: id.into(), label_index: i }).collect();
                    return Ok(None);
                }
                &external
            }
        };

        let exploration =
            finish_exploration(&initial, &pcfg, refiner, counts, &mut timer).map_err(|e| e.to_string())?;
        counts = exploration.counts;
        let file = LabelFile::new(
            id,
            (record.original_height_px, record.original_width_px),
            pcfg.working_size_px,
            &exploration.labels,
            Some(&exploration.forest),
        );
        file.write(out).map_err(|e| e.to_string())?;
        Ok(Some(exploration.labels.len()))
    })();

    let (status, error, masks) = match result {
        Ok(Some(n)) => (ImageStatus::Ok, None, n),
        Ok(None) => (ImageStatus::Pending, Some("waiting for external responses".to_string()), 0),
        Err(e) => {
            log::error!("{id}: {e}");
            (ImageStatus::Failed, Some(e), 0)
        }
    };
    ImageOutcome {
        report: ImageReport {
            image_id: id.to_string(),
            status,
            error,
            masks,
            counts: counts.into(),
            stage_ms: timer.stage_ms,
            total_ms: started.elapsed().as_secs_f64() * 1e3,
        },
        crops,
        refines,
    }
}

fn missing_crops(grid: &FeatureGrid, cfg: &PipelineConfig, source: &ResponseDirSource) -> Vec<CropRequest> {
    let mut seen = std::collections::BTreeSet::new();
    plan_windows(grid, cfg)
        .unwrap_or_default()
        .iter()
        .filter(|w| !source.path_for(w).exists())
        .map(|w| CropRequest::new(source.image_id, w))
        .filter(|r| seen.insert(r.request_id.clone()))
        .collect()
}

/// Explores every image of `manifest`, writing `<image_id>.json` label files
/// and the run report into `out`. Failures are isolated per image. Pending
/// crop and refinement requests are written next to the report.
pub fn run_explore(manifest: &Manifest, cfg: &RunConfig, out: &Path) -> Result<ExploreOutcome> {
    cfg.validate().map_err(CliError::Usage)?;
    fsio::create_dir(out)?;
    let started = Instant::now();
    let outcomes = map_parallel(&manifest.records, cfg.pipeline.workers, |_, record| {
        explore_one(record, &manifest.dir, cfg, out)
    });
    let mut images = Vec::with_capacity(outcomes.len());
    let mut crop_requests = Vec::new();
    let mut refine_requests = Vec::new();
    for o in outcomes {
        images.push(o.report);
        crop_requests.extend(o.crops);
        refine_requests.extend(o.refines);
    }
    let report = RunReport::new(images, started.elapsed().as_secs_f64() * 1e3);
    fsio::write_json(&out.join(REPORT_FILE), &report)?;
    for (name, empty) in [(CROP_REQUESTS_FILE, crop_requests.is_empty()), (REFINE_REQUESTS_FILE, refine_requests.is_empty())] {
        let path = out.join(name);
        if empty && path.exists() {
            std::fs::remove_file(&path).map_err(|e| CliError::io(&path, e))?;
        }
    }
    if !crop_requests.is_empty() {
        fsio::write_jsonl(&out.join(CROP_REQUESTS_FILE), &crop_requests)?;
    }
    if !refine_requests.is_empty() {
        fsio::write_jsonl(&out.join(REFINE_REQUESTS_FILE), &refine_requests)?;
    }
    Ok(ExploreOutcome { report, crop_requests, refine_requests })
}

/// Crop requests for every small region in the manifest, without running
/// local re-clustering. Images whose features cannot be read are reported as
/// errors alongside the requests that could be planned.
pub fn plan_crop_requests(manifest: &Manifest, cfg: &RunConfig) -> (Vec<CropRequest>, Vec<(String, String)>) {
    let planned = map_parallel(&manifest.records, cfg.pipeline.workers, |_, record| {
        let pcfg = image_config(record, cfg);
        let path = record.resolved_feature_path(&manifest.dir);
        let grid = fsio::read_feature_grid(&path).map_err(|e| e.to_string())?;
        let windows = plan_windows(&grid, &pcfg).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut seen = std::collections::BTreeSet::new();
        Ok::<_, String>(
            windows
                .iter()
                .map(|w| CropRequest::new(&record.image_id, w))
                .filter(|r| seen.insert(r.request_id.clone()))
                .collect::<Vec<_>>(),
        )
    });
    let mut requests = Vec::new();
    let mut errors = Vec::new();
    for (record, p) in manifest.records.iter().zip(planned) {
        match p {
            Ok(r) => requests.extend(r),
            Err(e) => errors.push((record.image_id.clone(), e)),
        }
    }
    (requests, errors)
}

pub fn output_path(out: &Path, image_id: &str) -> PathBuf {
    out.join(LabelFile::file_name(image_id))
}
