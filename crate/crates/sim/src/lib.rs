//! Scenario files, run driver, metrics and output for the BagChain
//! simulator. The protocol itself lives in `bagchain-core`.

use std::path::Path;

use thiserror::Error;

pub mod emit;
pub mod files;
pub mod metrics;
pub mod run;
pub mod scenario;

pub use metrics::{HeightRecord, RunReport};
pub use run::{build_world, run, Stepping};
pub use scenario::Scenario;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("csv {0}: {1}")]
    Csv(String, String),
    #[error("topology: {0}")]
    Topology(String),
    #[error(transparent)]
    World(#[from] bagchain_core::world::WorldError),
    #[error("round budget of {rounds} exhausted")]
    Timeout { rounds: u64, partial: Box<RunReport> },
}

impl SimError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        SimError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    /// Short stable tag for the machine-readable error line.
    pub fn kind(&self) -> &'static str {
        match self {
            SimError::Scenario(_) => "scenario",
            SimError::Io { .. } => "io",
            SimError::Csv(..) => "csv",
            SimError::Topology(_) => "topology",
            SimError::World(_) => "world",
            SimError::Timeout { .. } => "timeout",
        }
    }
}

impl From<bagchain_core::ml::MlError> for SimError {
    fn from(e: bagchain_core::ml::MlError) -> Self {
        SimError::World(e.into())
    }
}
