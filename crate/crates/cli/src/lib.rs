//! Batch front end: config ingestion, subcommand dispatch and table output.

pub mod commands;
pub mod config;
pub mod error;
pub mod table;

pub use commands::{run, Command};
pub use config::{Format, RunConfig};
pub use error::CliError;
pub use table::{Cell, ResultTable};

/// Rebuilds the configuration from the `# config.key = value` preamble of a
/// CSV result.
pub fn config_from_preamble(csv: &str) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    for line in csv.lines().take_while(|l| l.starts_with('#')) {
        if let Some(kv) = line.trim_start_matches('#').trim().strip_prefix("config.") {
            cfg.merge_override(kv)?;
        }
    }
    Ok(cfg)
}
