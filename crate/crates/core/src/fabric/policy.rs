use serde::Serialize;

use super::metrics::MetricsSample;
use crate::config::Config;
use crate::Millis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ScalingDecision {
    ScaleOut(usize),
    ScaleIn(usize),
    Hold,
}

pub trait ScalingPolicy: Send {
    /// Decides from the sample history, oldest first.
    fn evaluate(&mut self, history: &[MetricsSample]) -> ScalingDecision;
}

/// Scales out as soon as queued work exceeds free and incoming capacity;
/// scales in one worker at a time, and only after utilization has stayed
/// under the watermark with nothing queued for a whole window.
#[derive(Debug, Clone)]
pub struct LazyScalingPolicy {
    pub slots_per_worker: usize,
    pub low_watermark: f64,
    pub window: Millis,
    pub floor: usize,
}

impl LazyScalingPolicy {
    pub fn from_config(c: &Config) -> LazyScalingPolicy {
        LazyScalingPolicy {
            slots_per_worker: c.vm.slots_per_worker,
            low_watermark: c.scaling.low_watermark,
            window: c.scaling.lazy_window,
            floor: c.vm.floor,
        }
    }
}

impl ScalingPolicy for LazyScalingPolicy {
    fn evaluate(&mut self, history: &[MetricsSample]) -> ScalingDecision {
        let Some(latest) = history.last() else {
            return ScalingDecision::Hold;
        };
        if latest.queued_eligible > latest.free_ready_slots {
            let deficit = latest.queued_eligible - latest.free_ready_slots;
            let missing = deficit.saturating_sub(latest.provisioning_slots);
            if missing > 0 {
                return ScalingDecision::ScaleOut(missing.div_ceil(self.slots_per_worker.max(1)));
            }
            return ScalingDecision::Hold;
        }
        let Some(since) = latest.at.checked_sub(self.window) else {
            return ScalingDecision::Hold;
        };
        if history[0].at > since || latest.active_workers <= self.floor {
            return ScalingDecision::Hold;
        }
        let quiet = history
            .iter()
            .rev()
            .take_while(|s| s.at >= since)
            .all(|s| s.vm_utilization < self.low_watermark && s.queued_eligible == 0);
        if quiet {
            ScalingDecision::ScaleIn(1)
        } else {
            ScalingDecision::Hold
        }
    }
}
