use serde::Serialize;

use super::vm::VmPool;
use crate::Millis;

/// Snapshot of load at one instant of the clock.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MetricsSample {
    pub at: Millis,
    /// Pending Immediate and Relaxed queries. Best-of-effort work is never
    /// counted, so it can not cause a scale-out.
    pub queued_eligible: usize,
    pub running: usize,
    pub vm_utilization: f64,
    pub free_ready_slots: usize,
    /// Slots on workers still provisioning; capacity already on its way.
    pub provisioning_slots: usize,
    pub active_workers: usize,
}

impl MetricsSample {
    pub fn collect(at: Millis, pool: &VmPool, queued_eligible: usize, running: usize) -> MetricsSample {
        MetricsSample {
            at,
            queued_eligible,
            running,
            vm_utilization: pool.utilization(),
            free_ready_slots: pool.free_ready_slots(),
            provisioning_slots: pool.provisioning_slots(),
            active_workers: pool.active_workers(),
        }
    }
}
