//! Per-image self-exploration: global clustering, snapshot NMS, local
//! re-clustering of small regions, refinement gate and hierarchy analysis.
//!
//! Stages run sequentially and deterministically. Callers that want timing
//! or progress hook in through [`StageObserver`].

use alloc::string::String;
use alloc::vec::Vec;

use crate::cluster::{cluster_grid, ThresholdSchedule};
use crate::grid::FeatureGrid;
use crate::hierarchy::{build_forest, CoverageConfig, HierarchyForest};
use crate::label::PseudoLabel;
use crate::local::{
    assemble_initial_labels, make_window, recluster_window, select_small, LocalFeatureSource,
    LocalWindow, SmallSelector, DEFAULT_LOCAL_SIZE,
};
use crate::pool::{mask_nms, mix_snapshots, NmsConfig};
use crate::refine::{gate, MaskRefiner, RefineConfig};
use crate::self_correct::{DynamicThresholdParams, EmaConfig};
use crate::{Error, Result};

pub const DEFAULT_WORKING_SIZE: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub schedule: ThresholdSchedule,
    pub nms: NmsConfig,
    pub small: SmallSelector,
    pub refine: RefineConfig,
    pub coverage: CoverageConfig,
    pub dynamic: DynamicThresholdParams,
    pub ema: EmaConfig,
    pub workers: usize,
    pub working_size_px: usize,
    pub local_size_px: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            schedule: ThresholdSchedule::default(),
            nms: NmsConfig::default(),
            small: SmallSelector::default(),
            refine: RefineConfig::default(),
            coverage: CoverageConfig::default(),
            dynamic: DynamicThresholdParams::default(),
            ema: EmaConfig::default(),
            workers: 1,
            working_size_px: DEFAULT_WORKING_SIZE,
            local_size_px: DEFAULT_LOCAL_SIZE,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.nms.validate()?;
        self.small.validate()?;
        self.refine.validate()?;
        self.coverage.validate()?;
        self.dynamic.validate()?;
        self.ema.validate()?;
        if self.workers == 0 {
            return Err(Error::InvalidConfig("workers must be at least 1"));
        }
        if self.working_size_px == 0 || self.local_size_px == 0 {
            return Err(Error::ZeroDimension);
        }
        Ok(())
    }

    /// Checks that `grid` covers a `working_size x working_size` image and
    /// that the local size is a whole number of patches.
    pub fn check_grid(&self, grid: &FeatureGrid) -> Result<()> {
        let stride = grid.patch_stride();
        if !self.working_size_px.is_multiple_of(stride) || !self.local_size_px.is_multiple_of(stride) {
            return Err(Error::InvalidConfig(
                "working and local sizes must be divisible by the patch stride",
            ));
        }
        let expected = self.working_size_px / stride;
        if grid.height() != expected || grid.width() != expected {
            return Err(Error::DimensionMismatch {
                left: (grid.height(), grid.width()),
                right: (expected, expected),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageKind {
    Cluster,
    MixNms,
    LocalRecluster,
    Assemble,
    RefineGate,
    Hierarchy,
}

impl StageKind {
    pub const ALL: [StageKind; 6] = [
        StageKind::Cluster,
        StageKind::MixNms,
        StageKind::LocalRecluster,
        StageKind::Assemble,
        StageKind::RefineGate,
        StageKind::Hierarchy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StageKind::Cluster => "cluster",
            StageKind::MixNms => "mix_nms",
            StageKind::LocalRecluster => "local_recluster",
            StageKind::Assemble => "assemble",
            StageKind::RefineGate => "refine_gate",
            StageKind::Hierarchy => "hierarchy",
        }
    }
}

pub trait StageObserver {
    fn begin(&mut self, _stage: StageKind) {}
    fn end(&mut self, _stage: StageKind, _count: usize) {}
}

impl StageObserver for () {}

/// Label counts after each stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StageCounts {
    pub snapshots_pool: usize,
    pub after_nms: usize,
    pub small: usize,
    pub large: usize,
    pub local_survivors: usize,
    pub initial: usize,
    pub after_gate: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exploration {
    pub labels: Vec<PseudoLabel>,
    pub forest: HierarchyForest,
    pub counts: StageCounts,
}

struct GlobalStage {
    small: Vec<PseudoLabel>,
    large: Vec<PseudoLabel>,
    windows: Vec<LocalWindow>,
}

fn global_stage(
    grid: &FeatureGrid,
    cfg: &PipelineConfig,
    counts: &mut StageCounts,
    observer: &mut dyn StageObserver,
) -> Result<GlobalStage> {
    cfg.check_grid(grid)?;
    let stride = grid.patch_stride();

    observer.begin(StageKind::Cluster);
    let agg = cluster_grid(grid, &cfg.schedule);
    let pool = mix_snapshots(&agg.snapshots, stride);
    counts.snapshots_pool = pool.len();
    observer.end(StageKind::Cluster, pool.len());

    observer.begin(StageKind::MixNms);
    let deduped = mask_nms(&pool, &cfg.nms)?;
    counts.after_nms = deduped.len();
    observer.end(StageKind::MixNms, deduped.len());

    let (h, w) = (grid.pixel_height(), grid.pixel_width());
    let (small, large) = select_small(deduped, &cfg.small, (h * w) as u64);
    counts.small = small.len();
    counts.large = large.len();
    let grid_side = cfg.local_size_px / stride;
    let windows = small
        .iter()
        .enumerate()
        .map(|(i, l)| make_window(l, h, w, grid_side, i))
        .collect();
    Ok(GlobalStage { small, large, windows })
}

/// Local windows the explorer would request for `grid`, in small-label order.
pub fn plan_windows(grid: &FeatureGrid, cfg: &PipelineConfig) -> Result<Vec<LocalWindow>> {
    let mut counts = StageCounts::default();
    Ok(global_stage(grid, cfg, &mut counts, &mut ())?.windows)
}

/// Labels that enter the refinement gate: everything up to and including
/// the final NMS over large regions and local survivors.
pub fn initial_labels(
    grid: &FeatureGrid,
    cfg: &PipelineConfig,
    local_source: &dyn LocalFeatureSource,
    counts: &mut StageCounts,
    observer: &mut dyn StageObserver,
) -> Result<Vec<PseudoLabel>> {
    let global = global_stage(grid, cfg, counts, observer)?;
    let (h, w) = (grid.pixel_height(), grid.pixel_width());

    observer.begin(StageKind::LocalRecluster);
    let mut survivors = Vec::new();
    let mut pending: Vec<String> = Vec::new();
    for window in &global.windows {
        match local_source.local_features(window) {
            Ok(local) => {
                survivors.extend(recluster_window(window, &local, &cfg.schedule, &cfg.nms, h, w)?)
            }
            Err(Error::PendingCrop { request_id }) => pending.push(request_id),
            Err(e) => return Err(e),
        }
    }
    if !pending.is_empty() {
        return Err(Error::PendingCrop { request_id: pending.join(",") });
    }
    counts.local_survivors = survivors.len();
    observer.end(StageKind::LocalRecluster, survivors.len());
    drop(global.small);

    observer.begin(StageKind::Assemble);
    let initial = assemble_initial_labels(global.large, survivors, &cfg.nms)?;
    counts.initial = initial.len();
    observer.end(StageKind::Assemble, initial.len());
    Ok(initial)
}

/// Refinement gate and hierarchy analysis over the initial labels.
pub fn finish_exploration(
    initial: &[PseudoLabel],
    cfg: &PipelineConfig,
    refiner: &dyn MaskRefiner,
    mut counts: StageCounts,
    observer: &mut dyn StageObserver,
) -> Result<Exploration> {
    observer.begin(StageKind::RefineGate);
    let (labels, _) = gate(initial, refiner, &cfg.refine)?;
    counts.after_gate = labels.len();
    observer.end(StageKind::RefineGate, labels.len());

    observer.begin(StageKind::Hierarchy);
    let forest = build_forest(&labels, &cfg.coverage)?;
    observer.end(StageKind::Hierarchy, forest.len());

    Ok(Exploration { labels, forest, counts })
}

/// Full self-exploration of one image.
pub fn explore_image(
    grid: &FeatureGrid,
    cfg: &PipelineConfig,
    local_source: &dyn LocalFeatureSource,
    refiner: &dyn MaskRefiner,
    observer: &mut dyn StageObserver,
) -> Result<Exploration> {
    cfg.validate()?;
    let mut counts = StageCounts::default();
    let initial = initial_labels(grid, cfg, local_source, &mut counts, observer)?;
    finish_exploration(&initial, cfg, refiner, counts, observer)
}
