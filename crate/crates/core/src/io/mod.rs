//! Configuration files and report output.

pub mod config;
pub mod report;

pub use config::{emit_config, parse_config, parse_config_str};
pub use report::{emit_report, OutputDir, RunManifest};
