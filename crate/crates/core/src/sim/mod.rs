//! Deterministic workload simulation on a virtual clock.

pub mod checks;
pub mod compare;
pub mod fixture;
pub mod harness;
pub mod scenario;

pub use checks::{check_run, CheckReport};
pub use compare::{compare_levels, Comparison, LevelOutcome};
pub use fixture::{generate, FixtureSize};
pub use harness::{replay, run_scenario, simulate, simulate_scenario, SimReport, SimRun, Stop};
pub use scenario::{read_trace, write_trace, Scenario, TraceRow};
