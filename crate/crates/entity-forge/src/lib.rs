//! File formats, configuration, batch execution and the command-line
//! front end around [`entity_forge_core`].

pub mod config;
pub mod doctor;
pub mod error;
pub mod evaluate;
pub mod exchange;
pub mod fsio;
pub mod labels;
pub mod manifest;
pub mod render;
pub mod report;
pub mod run;
pub mod workers;

pub use config::{FeatureMode, RunConfig};
pub use error::{CliError, ExitStatus, Result};
