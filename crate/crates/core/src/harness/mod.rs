//! Scenario files, presets and run orchestration.

mod config;
mod presets;
mod run;

pub use config::{DefenderSection, EvalSection, GraphSection, ScenarioConfig};
pub use presets::{preset, preset_names, PresetSummary, PRESETS};
pub use run::{
    ablate_sp, read_manifest, run_experiment, sweep, sweep_grid, Algorithm, RunManifest, RunStatus,
    SweepPoint, SWEEP_TAU, SWEEP_UPDATE_RATE, SWEEP_WEIGHT_TAU, VERSION,
};
