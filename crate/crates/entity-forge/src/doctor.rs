//! Manifest and feature-file validation without running the pipeline.

use crate::config::RunConfig;
use crate::fsio;
use crate::manifest::Manifest;
use crate::run::image_config;
use crate::workers::map_parallel;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub image_id: String,
    pub problem: String,
}

/// Every problem found, in manifest order. An empty result means every
/// feature file exists, parses and fits its working size.
pub fn run_doctor(manifest: &Manifest, cfg: &RunConfig) -> Vec<Finding> {
    let results = map_parallel(&manifest.records, cfg.pipeline.workers, |_, record| {
        let pcfg = image_config(record, cfg);
        let path = record.resolved_feature_path(&manifest.dir);
        let mut problems = Vec::new();
        if let Err(e) = pcfg.validate() {
            problems.push(e.to_string());
        }
        match fsio::read_feature_grid(&path) {
            Ok(grid) => {
                if let Err(e) = pcfg.check_grid(&grid) {
                    problems.push(format!(
                        "{}: {e} (grid {}x{} stride {}, working size {})",
                        path.display(),
                        grid.height(),
                        grid.width(),
                        grid.patch_stride(),
                        pcfg.working_size_px
                    ));
                }
            }
            Err(e) => problems.push(e.to_string()),
        }
        problems
    });
    manifest
        .records
        .iter()
        .zip(results)
        .flat_map(|(r, ps)| ps.into_iter().map(move |problem| Finding { image_id: r.image_id.clone(), problem }))
        .collect()
}
