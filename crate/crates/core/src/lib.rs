//! Core of turbodb: a serverless-style analytics service that runs SQL over
//! CSV-backed tables on two simulated compute pools and prices each query by
//! the service level it was submitted at.
//!
//! The crate is organised by subsystem:
//!
//! - [`catalog`]: schemas, data-file locations and scan statistics.
//! - [`sql`]: parser, logical planner, plan splitting, fragment execution and
//!   a brute-force oracle executor.
//! - [`fabric`]: the VM pool (slow to scale, cheap) and the cloud-function pool
//!   (instant, expensive), metrics collection, scaling policy and metering.
//! - [`scheduler`]: the coordinator that places queries by service level.
//! - [`billing`]: per-TB-scan pricing and the cost-visibility report.
//! - [`sim`]: deterministic workload simulation on a virtual clock.

pub mod billing;
pub mod catalog;
pub mod config;
pub mod error;
pub mod fabric;
pub mod money;
pub mod rng;
pub mod scheduler;
pub mod sim;
pub mod sql;
#[cfg(test)]
mod testutil;
pub mod value;

pub use error::{Error, Result};

/// Milliseconds on the virtual (or wall-anchored) clock.
pub type Millis = u64;

pub type QueryId = u64;
