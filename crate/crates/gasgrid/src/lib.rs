//! File formats, result writers and the command line for `gasgrid-core`.

pub mod cli;
pub mod control_file;
mod error;
pub mod format;
pub mod json;
pub mod network_file;
pub mod results;
pub mod scenario_file;

pub use error::{Error, Result};
pub use json::KeyPolicy;
pub use network_file::{load_network, save_network, NetworkFile};
pub use scenario_file::{load_scenario, save_scenario, ScenarioFile};

/// Directory of the shipped reference case.
pub fn fixture_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}
