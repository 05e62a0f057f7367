//! Impact assessment of hypothesized multi-substation outages.
//!
//! The crate screens outage combinations with AC power flow, verifies them
//! with time-domain simulation of the switching sequence, and cross-checks
//! the two verdicts.

pub mod aging;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod powerflow;
pub mod raim;
pub mod screening;
pub mod topology;

pub use error::{Error, Result};
