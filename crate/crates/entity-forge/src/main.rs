use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use entity_forge::config::{FeatureMode, RunConfig};
use entity_forge::doctor::run_doctor;
use entity_forge::error::{CliError, ExitStatus};
use entity_forge::evaluate::run_eval;
use entity_forge::fsio;
use entity_forge::manifest::read_manifest;
use entity_forge::render::render_overlays;
use entity_forge::run::{plan_crop_requests, run_explore};

#[derive(Parser)]
#[command(name = "entity-forge", version, about = "Hierarchical entity pseudo-labels from patch-feature grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run self-exploration over every image in a manifest.
    Explore {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        feature_mode: Option<FeatureMode>,
        /// Directory holding `<request_id>.sfg` crop responses.
        #[arg(long)]
        crop_responses: Option<PathBuf>,
    },
    /// Write the local-crop requests the exporter must answer.
    CropRequests {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output JSON-lines file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Class-agnostic AR/AP of a prediction directory against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the result JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw label overlays onto the source images.
    Render {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a manifest and its feature files.
    Doctor {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load_config(path: Option<&PathBuf>) -> Result<RunConfig, CliError> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_env()?;
    Ok(cfg)
}

fn execute(command: Command) -> Result<ExitStatus, CliError> {
    match command {
        Command::Explore { manifest, config, out, feature_mode, crop_responses } => {
            let mut cfg = load_config(config.as_ref())?;
            if let Some(m) = feature_mode {
                cfg.feature_mode = m;
            }
            if let Some(dir) = crop_responses {
                cfg.crop_response_dir = Some(dir);
            }
            if cfg.feature_mode == FeatureMode::Exporter && cfg.crop_response_dir.is_none() {
                return Err(CliError::Usage("exporter mode needs --crop-responses or local.response_dir".into()));
            }
            let manifest = read_manifest(&manifest)?;
            let outcome = run_explore(&manifest, &cfg, &out)?;
            let a = &outcome.report.aggregate;
            println!(
                "{} images: {} ok, {} pending, {} failed; {:.1} masks/image, {:.1} ms/image",
                a.images, a.succeeded, a.pending, a.failed, a.masks_per_image, a.time_per_image_ms
            );
            if !outcome.crop_requests.is_empty() {
                println!("{} crop requests written", outcome.crop_requests.len());
            }
            if !outcome.refine_requests.is_empty() {
                println!("{} refine requests written", outcome.refine_requests.len());
            }
            Ok(if outcome.report.all_ok() { ExitStatus::Success } else { ExitStatus::PartialFailure })
        }
        Command::CropRequests { manifest, config, out } => {
            let cfg = load_config(config.as_ref())?;
            let manifest = read_manifest(&manifest)?;
            let (requests, errors) = plan_crop_requests(&manifest, &cfg);
            fsio::write_jsonl(&out, &requests)?;
            for (id, e) in &errors {
                log::error!("{id}: {e}");
            }
            println!("{} crop requests written", requests.len());
            Ok(if errors.is_empty() { ExitStatus::Success } else { ExitStatus::PartialFailure })
        }
        Command::Eval { pred, gt, config, out } => {
            let cfg = load_config(config.as_ref())?;
            let report = run_eval(&pred, &gt, &cfg.eval)?;
            let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::json(&pred, e))?;
            println!("{text}");
            if let Some(path) = out {
                fsio::write_json(&path, &report)?;
            }
            Ok(ExitStatus::Success)
        }
        Command::Render { images, labels, out } => {
            let summary = render_overlays(&images, &labels, &out)?;
            println!("{} overlays written, {} skipped", summary.written.len(), summary.skipped.len());
            Ok(if summary.skipped.is_empty() { ExitStatus::Success } else { ExitStatus::PartialFailure })
        }
        Command::Doctor { manifest, config } => {
            let cfg = load_config(config.as_ref())?;
            let manifest = read_manifest(&manifest)?;
            let findings = run_doctor(&manifest, &cfg);
            for f in &findings {
                println!("{}: {}", f.image_id, f.problem);
            }
            println!("{} images checked, {} problems", manifest.records.len(), findings.len());
            Ok(if findings.is_empty() { ExitStatus::Success } else { ExitStatus::PartialFailure })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let status = match execute(cli.command) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            ExitStatus::ConfigOrIo
        }
    };
    ExitCode::from(status as u8)
}
