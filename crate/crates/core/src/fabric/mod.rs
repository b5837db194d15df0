//! The two simulated compute services and what watches them.
//!
//! [`VmPool`] is slow to grow and cheap; [`CfPool`] hands out ephemeral
//! workers within a second at a multiple of the VM price. The metrics
//! collector samples the VM pool and the scheduler queues, a
//! [`ScalingPolicy`] turns the sample history into scale decisions, and the
//! [`ResourceMeter`] records what each query consumed.

mod cf;
pub mod meter;
mod metrics;
mod policy;
mod vm;

pub use cf::{CfPool, CfWorker};
pub use meter::{MeterEntry, Pool, ResourceMeter};
pub use metrics::MetricsSample;
pub use policy::{LazyScalingPolicy, ScalingDecision, ScalingPolicy};
pub use vm::{SlotHandle, VmPool, VmWorker, WorkerState};
