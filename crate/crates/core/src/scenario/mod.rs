//! Config files, bundled presets, and run outputs.

pub mod analysis;
pub mod config;
pub mod presets;
pub mod run;

pub use analysis::{add_noise, field_map, read_observed, FitModel};
pub use config::{echo_config, parse_config, parse_config_str, Scenario};
pub use presets::{preset_runs, preset_scenario, run_preset, PresetRun, PRESET_NAMES};
pub use run::{run_scenario, simulate, RunResult};
