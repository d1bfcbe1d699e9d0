//! Flat `key = value` run configuration.
//!
//! ```text
//! # comments start with '#'
//! workers = 4
//! schedule.thresholds = 0.6, 0.5, 0.4, 0.3, 0.2, 0.1
//! nms.iou_threshold = 0.9
//! local.feature_mode = proxy
//! ```
//!
//! Unknown keys, repeated keys and malformed values are errors. Relative
//! directories resolve against the configuration file's directory.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use entity_forge_core::cluster::ThresholdSchedule;
use entity_forge_core::eval::EvalConfig;
use entity_forge_core::explore::PipelineConfig;
use entity_forge_core::pool::NmsOrdering;
use entity_forge_core::refine::RefinerKind;

use crate::error::{CliError, Result};

pub const WORKERS_ENV: &str = "ENTITY_FORGE_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum FeatureMode {
    /// Resample the global grid for local windows.
    #[default]
    Proxy,
    /// Read crop responses produced by the feature exporter.
    Exporter,
}

impl FromStr for FeatureMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "proxy" => Ok(FeatureMode::Proxy),
            "exporter" => Ok(FeatureMode::Exporter),
            _ => Err(format!("expected proxy or exporter, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub eval: EvalConfig,
    pub feature_mode: FeatureMode,
    pub crop_response_dir: Option<PathBuf>,
    pub external_refine_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            eval: EvalConfig::default(),
            feature_mode: FeatureMode::Proxy,
            crop_response_dir: None,
            external_refine_dir: None,
        }
    }
}

fn parse_list(value: &str) -> std::result::Result<Vec<f64>, String> {
    value
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}")))
        .collect()
}

fn parse<T: FromStr>(value: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| format!("{value:?}: {e}"))
}

impl RunConfig {
    fn set(&mut self, key: &str, value: &str, base: &Path) -> std::result::Result<(), String> {
        let p = &mut self.pipeline;
        match key {
            "workers" => p.workers = parse(value)?,
            "working_size_px" => p.working_size_px = parse(value)?,
            "local_size_px" => p.local_size_px = parse(value)?,
            "schedule.thresholds" => {
                p.schedule = ThresholdSchedule::new(parse_list(value)?).map_err(|e| e.to_string())?
            }
            "nms.iou_threshold" => p.nms.iou_threshold = parse(value)?,
            "nms.ordering" => {
                p.nms.ordering = match value {
                    "area_desc" => NmsOrdering::AreaDesc,
                    "threshold_then_area" => NmsOrdering::ThresholdThenArea,
                    _ => return Err(format!("expected area_desc or threshold_then_area, got {value:?}")),
                }
            }
            "small.fraction" => p.small.small_fraction = parse(value)?,
            "refine.refiner" => {
                p.refine.refiner = match value {
                    "builtin_morph" => RefinerKind::BuiltinMorph,
                    "external" => RefinerKind::External,
                    _ => return Err(format!("expected builtin_morph or external, got {value:?}")),
                }
            }
            "refine.iou_keep_threshold" => p.refine.iou_keep_threshold = parse(value)?,
            "refine.external_dir" => self.external_refine_dir = Some(base.join(value)),
            "coverage.fraction" => p.coverage.cover_fraction = parse(value)?,
            "dynamic.theta_small" => p.dynamic.theta_small = parse(value)?,
            "dynamic.theta_large" => p.dynamic.theta_large = parse(value)?,
            "dynamic.gamma" => p.dynamic.gamma = parse(value)?,
            "ema.momentum" => p.ema.momentum = parse(value)?,
            "local.feature_mode" => self.feature_mode = parse(value)?,
            "local.response_dir" => self.crop_response_dir = Some(base.join(value)),
            "eval.max_predictions" => self.eval.max_predictions = parse(value)?,
            "eval.iou_thresholds" => self.eval.iou_thresholds = parse_list(value)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        self.pipeline.validate().map_err(|e| e.to_string())?;
        self.eval.validate().map_err(|e| e.to_string())?;
        if self.pipeline.refine.refiner == RefinerKind::External && self.external_refine_dir.is_none() {
            return Err("refine.refiner = external needs refine.external_dir".into());
        }
        Ok(())
    }

    /// Parses `text`; `path` is used for messages and to resolve directories.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new(""));
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| CliError::Parse { path: path.to_path_buf(), line: i + 1, message };
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected key = value".into()))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(err(format!("repeated key {key:?}")));
            }
            cfg.set(key, value, base).map_err(err)?;
        }
        cfg.validate().map_err(|m| CliError::invalid(path, m))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Applies the worker-count environment override, if set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(WORKERS_ENV) {
            let n: usize = v
                .trim()
                .parse()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| CliError::Usage(format!("{WORKERS_ENV} must be a positive integer, got {v:?}")))?;
            self.pipeline.workers = n;
        }
        Ok(())
    }
}
