//! Experiment runner for the firmsim simulator: config files, replicated
//! sweeps, presets and CSV/SVG output.

use std::path::Path;

use firmsim::SimError;
use thiserror::Error;

pub mod config;
pub mod emit;
pub mod presets;
pub mod sweep;

pub use config::ExperimentConfig;
pub use presets::{preset, Preset, PRESET_NAMES};
pub use sweep::{run_experiment, sweep, Axis, SweepResult, SweepSpec};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Sim(#[from] SimError),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("{0}")]
    Output(String),

    #[error("unknown preset `{0}` (expected one of {names})", names = PRESET_NAMES.join(", "))]
    UnknownPreset(String),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.display().to_string(), source }
    }

    /// 2 for bad input, 3 for a simulator invariant or protocol fault, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Sim(e) if e.is_config() => 2,
            HarnessError::UnknownPreset(_) => 2,
            HarnessError::Sim(_) => 3,
            _ => 1,
        }
    }
}
