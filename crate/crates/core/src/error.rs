use std::path::PathBuf;

use thiserror::Error;

use crate::grid::{BusId, SubstationId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid case: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("unknown substation {0}")]
    UnknownSubstation(SubstationId),
    #[error("unknown bus {0}")]
    UnknownBus(BusId),
    #[error("no in-service branch between buses {0} and {1}")]
    UnknownBranch(BusId, BusId),
    #[error("outage target set is empty")]
    EmptyOutage,
    #[error("in-service branch {0}-{1} has zero impedance")]
    ZeroImpedance(BusId, BusId),
    #[error("level k={k} exceeds universe size n={n}")]
    LevelTooLarge { n: usize, k: usize },
    #[error("power flow solution is not converged")]
    NotConverged,
    #[error("no machine model for generator {0} at bus {1}")]
    MissingMachine(usize, BusId),
    #[error("island containing bus {0} has no machines")]
    NoMachines(BusId),
    #[error("invalid switching schedule: {0}")]
    Schedule(String),
    #[error("unknown switching device {0:?}")]
    UnknownDevice(String),
    #[error("every transformer unit is out of service")]
    AllUnitsOut,
    #[error("steady-state and dynamic verdicts agree; nothing to re-evaluate")]
    NoDisagreement,
    #[error("dynamic verdict for {0} has no matching screening result")]
    Unmatched(String),
}
