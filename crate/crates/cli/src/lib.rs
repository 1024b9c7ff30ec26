//! Pipeline commands behind the `evcs` binary: simulate a station day,
//! train the ensemble, and score a day for anomalous modules.

pub mod commands;
pub mod manifest;
pub mod plot;

use std::fmt;

pub use commands::{
    detect, parse_anomaly, simulate, train, DetectArgs, DetectOutcome, DetectReport, ParamsFile, SimulateArgs,
    SimulateOutcome, TrainArgs, TrainOutcome,
};
pub use manifest::RunManifest;

/// Exit status when the input files could not be used.
pub const EXIT_DATA: i32 = 3;
/// Exit status for invalid flags or configuration.
pub const EXIT_USAGE: i32 = 2;
/// Exit status of `detect` when at least one module is flagged.
pub const EXIT_ANOMALY: i32 = 4;

/// Invalid arguments or configuration, as opposed to unusable data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Maps a command failure to the process exit status.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.chain().any(|e| e.downcast_ref::<UsageError>().is_some()) {
        EXIT_USAGE
    } else {
        EXIT_DATA
    }
}
