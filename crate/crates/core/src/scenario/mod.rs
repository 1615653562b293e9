//! Closed-loop simulation: monitor, controller, observer and plant in one
//! tick loop, with scripted pedestrians, severity scoring and sweeps.

mod config;
pub mod fixtures;
mod log;
mod run;
mod sweep;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{horizon_steps, Leg, PedestrianAgent, PedestrianSpec, Scenario, ScenarioConfig, StartPose};
pub use log::{
    read_log, replay_check, write_csv, write_log, LogHeader, LogLine, ReplayReport, ReplaySettings,
};
pub use run::{run_scenario, Outcome, RunOutput, RunReport, TickRecord};
pub use sweep::{sweep, SweepCell, SweepReport};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("scenario file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("map: {0}")]
    Map(#[from] crate::grid::GridError),
    #[error("path: {0}")]
    Path(#[from] crate::reference::ReferenceError),
    #[error("vehicle: {0}")]
    Vehicle(#[from] crate::dynamics::DynamicsError),
    #[error("constraints: {0}")]
    Constraints(#[from] crate::constraints::ConstraintError),
    #[error("weights: {0}")]
    Weights(#[from] crate::nmpc::NmpcError),
    #[error("monitor: {0}")]
    Reachability(#[from] crate::reachability::ReachabilityError),
    #[error("log line {line}: {message}")]
    Log { line: usize, message: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// Rating of a run by its largest footprint overlap with potential
/// pedestrian cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeverityClass {
    Safe,
    MinorConflict,
    Critical,
    Hazardous,
}

impl SeverityClass {
    pub fn label(self) -> &'static str {
        match self {
            SeverityClass::Safe => "safe",
            SeverityClass::MinorConflict => "minor conflict",
            SeverityClass::Critical => "critical",
            SeverityClass::Hazardous => "hazardous",
        }
    }
}

impl std::fmt::Display for SeverityClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

pub fn classify_severity(max_overlap: f64) -> SeverityClass {
    if max_overlap <= 0.0 {
        SeverityClass::Safe
    } else if max_overlap <= 0.10 {
        SeverityClass::MinorConflict
    } else if max_overlap <= 0.50 {
        SeverityClass::Critical
    } else {
        SeverityClass::Hazardous
    }
}
