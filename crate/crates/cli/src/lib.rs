//! Command-line front end of `outbreak-core`: versioned JSON configs, CSV
//! tables with provenance headers and optional SVG charts.

pub mod app;
pub mod config;
pub mod output;
pub mod svg;

pub use app::{main_entry, CliError};
pub use config::{parse_config, RunConfig};
