//! Scenario configuration, scheme baselines, Monte Carlo sweeps and CSV/JSON
//! output for the command-line tool.

pub mod config;
pub mod scenario;
pub mod sweep;
pub mod validate;

pub use config::{load_config, save_config, ScenarioConfig, Scheme};
pub use scenario::{apply_scheme, generate_channels};
pub use sweep::{run_roc, run_sweep, RunMetadata, SweepAxis};
