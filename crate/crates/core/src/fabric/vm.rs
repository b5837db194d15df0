use serde::Serialize;

use super::policy::ScalingDecision;
use crate::config::VmConfig;
use crate::error::{Error, Result};
use crate::Millis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WorkerState {
    Provisioning,
    Ready,
    Draining,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VmWorker {
    pub id: usize,
    pub state: WorkerState,
    pub slots: usize,
    pub busy: usize,
    pub ready_at: Millis,
    pub created_at: Millis,
}

/// A busy slot. Give it back with [`VmPool::release`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotHandle {
    pub worker: usize,
    pub acquired_at: Millis,
}

#[derive(Debug, Clone)]
pub struct VmPool {
    workers: Vec<VmWorker>,
    next_id: usize,
    config: VmConfig,
    /// Slot-milliseconds of workers already removed.
    retired_slot_ms: u128,
    /// Slot-milliseconds of released slots.
    busy_slot_ms: u128,
}

impl VmPool {
    /// A pool holding `floor` ready workers from time zero.
    pub fn new(config: VmConfig) -> VmPool {
        let mut pool = VmPool {
            workers: Vec::new(),
            next_id: 0,
            config,
            retired_slot_ms: 0,
            busy_slot_ms: 0,
        };
        for _ in 0..pool.config.floor {
            pool.add_worker(0, 0);
        }
        pool
    }

    fn add_worker(&mut self, now: Millis, ready_at: Millis) -> usize {
        let id = self.next_id;
        self.next_id += 1;
        self.workers.push(VmWorker {
            id,
            state: if ready_at <= now {
                WorkerState::Ready
            } else {
                WorkerState::Provisioning
            },
            slots: self.config.slots_per_worker,
            busy: 0,
            ready_at,
            created_at: now,
        });
        id
    }

    fn retire(&mut self, index: usize, now: Millis) {
        let w = self.workers.remove(index);
        self.retired_slot_ms += (now - w.created_at) as u128 * w.slots as u128;
    }

    pub fn workers(&self) -> &[VmWorker] {
        &self.workers
    }

    pub fn config(&self) -> &VmConfig {
        &self.config
    }

    /// Promotes workers whose provisioning finished and removes idle
    /// draining workers.
    pub fn refresh(&mut self, now: Millis) {
        for w in &mut self.workers {
            if w.state == WorkerState::Provisioning && w.ready_at <= now {
                w.state = WorkerState::Ready;
            }
        }
        let mut i = 0;
        while i < self.workers.len() {
            if self.workers[i].state == WorkerState::Draining && self.workers[i].busy == 0 {
                self.retire(i, now);
            } else {
                i += 1;
            }
        }
    }

    /// Takes a free slot on the lowest-indexed ready worker.
    pub fn acquire(&mut self, now: Millis) -> Option<SlotHandle> {
        let w = self.workers.iter_mut().find(|w| {
            w.state == WorkerState::Ready && w.ready_at <= now && w.busy < w.slots
        })?;
        w.busy += 1;
        Some(SlotHandle {
            worker: w.id,
            acquired_at: now,
        })
    }

    /// Frees a slot and returns how long it was held.
    pub fn release(&mut self, slot: SlotHandle, now: Millis) -> Result<Millis> {
        let i = self
            .workers
            .iter()
            .position(|w| w.id == slot.worker)
            .ok_or_else(|| Error::Invariant(format!("release on unknown worker {}", slot.worker)))?;
        let w = &mut self.workers[i];
        if w.busy == 0 || now < slot.acquired_at {
            return Err(Error::Invariant(format!("bad release on worker {}", slot.worker)));
        }
        w.busy -= 1;
        let held = now - slot.acquired_at;
        self.busy_slot_ms += held as u128;
        if w.state == WorkerState::Draining && w.busy == 0 {
            self.retire(i, now);
        }
        Ok(held)
    }

    fn ready(&self) -> impl Iterator<Item = &VmWorker> {
        self.workers.iter().filter(|w| w.state == WorkerState::Ready)
    }

    pub fn ready_slots(&self) -> usize {
        self.ready().map(|w| w.slots).sum()
    }

    pub fn busy_ready_slots(&self) -> usize {
        self.ready().map(|w| w.busy).sum()
    }

    pub fn free_ready_slots(&self) -> usize {
        self.ready_slots() - self.busy_ready_slots()
    }

    pub fn provisioning_slots(&self) -> usize {
        self.workers
            .iter()
            .filter(|w| w.state == WorkerState::Provisioning)
            .map(|w| w.slots)
            .sum()
    }

    /// Busy slots over ready slots, 0 when nothing is ready.
    pub fn utilization(&self) -> f64 {
        let total = self.ready_slots();
        if total == 0 {
            0.0
        } else {
            self.busy_ready_slots() as f64 / total as f64
        }
    }

    /// Workers not draining.
    pub fn active_workers(&self) -> usize {
        self.workers
            .iter()
            .filter(|w| w.state != WorkerState::Draining)
            .count()
    }

    pub fn busy_slots(&self) -> usize {
        self.workers.iter().map(|w| w.busy).sum()
    }

    /// Applies a decision. Returns the number of workers added (positive) or
    /// taken out of service (negative).
    pub fn apply(&mut self, decision: ScalingDecision, now: Millis) -> i64 {
        match decision {
            ScalingDecision::Hold => 0,
            ScalingDecision::ScaleOut(n) => {
                for _ in 0..n {
                    self.add_worker(now, now + self.config.provision_lag);
                }
                n as i64
            }
            ScalingDecision::ScaleIn(n) => {
                let removable = self.active_workers().saturating_sub(self.config.floor);
                let mut done = 0;
                for _ in 0..n.min(removable) {
                    if !self.scale_in_one(now) {
                        break;
                    }
                    done += 1;
                }
                -(done as i64)
            }
        }
    }

    /// Removes an idle ready worker (highest id first), else cancels the
    /// newest provisioning worker, else marks a busy worker draining.
    fn scale_in_one(&mut self, now: Millis) -> bool {
        let idle = self
            .workers
            .iter()
            .rposition(|w| w.state == WorkerState::Ready && w.busy == 0);
        if let Some(i) = idle {
            self.retire(i, now);
            return true;
        }
        let provisioning = self
            .workers
            .iter()
            .rposition(|w| w.state == WorkerState::Provisioning);
        if let Some(i) = provisioning {
            self.retire(i, now);
            return true;
        }
        match self.workers.iter_mut().rev().find(|w| w.state == WorkerState::Ready) {
            Some(w) => {
                w.state = WorkerState::Draining;
                true
            }
            None => false,
        }
    }

    /// Slot-milliseconds during which slots existed, provisioning time
    /// included, up to `now`.
    pub fn provisioned_slot_ms(&self, now: Millis) -> u128 {
        self.retired_slot_ms
            + self
                .workers
                .iter()
                .map(|w| (now.saturating_sub(w.created_at)) as u128 * w.slots as u128)
                .sum::<u128>()
    }

    /// Slot-milliseconds of slots held and released so far.
    pub fn busy_slot_ms(&self) -> u128 {
        self.busy_slot_ms
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::money::Money;

    fn config(slots: usize, floor: usize) -> VmConfig {
        VmConfig {
            provision_lag: 90_000,
            unit_price_per_slot_s: Money::from_micros(500),
            slots_per_worker: slots,
            floor,
        }
    }

    #[test]
    fn acquire_takes_lowest_worker_and_runs_out() {
        let mut pool = VmPool::new(config(2, 1));
        let a = pool.acquire(0).unwrap();
        assert_eq!(a.worker, 0);
        pool.acquire(0).unwrap();
        assert!(pool.acquire(0).is_none());
    }

    #[test]
    fn provisioning_worker_accepts_nothing_before_ready() {
        let mut pool = VmPool::new(config(1, 1));
        pool.acquire(0).unwrap();
        assert_eq!(pool.apply(ScalingDecision::ScaleOut(2), 1_000), 2);
        assert_eq!(pool.workers()[1].ready_at, 91_000);
        pool.refresh(90_999);
        assert!(pool.acquire(90_999).is_none());
        assert_eq!(pool.provisioning_slots(), 2);
        pool.refresh(91_000);
        assert_eq!(pool.acquire(91_000).unwrap().worker, 1);
    }

    #[test]
    fn scale_in_removes_idle_worker_and_respects_floor() {
        let mut pool = VmPool::new(config(1, 1));
        pool.apply(ScalingDecision::ScaleOut(1), 0);
        pool.refresh(90_000);
        let busy = pool.acquire(90_000).unwrap();
        assert_eq!(busy.worker, 0);
        assert_eq!(pool.apply(ScalingDecision::ScaleIn(1), 100_000), -1);
        assert_eq!(pool.workers().len(), 1);
        assert_eq!(pool.workers()[0].id, 0);
        assert_eq!(pool.apply(ScalingDecision::ScaleIn(1), 100_000), 0);
        assert_eq!(pool.release(busy, 100_000).unwrap(), 10_000);
    }

    #[test]
    fn draining_worker_finishes_its_task() {
        let mut pool = VmPool::new(config(1, 1));
        pool.apply(ScalingDecision::ScaleOut(1), 0);
        pool.refresh(90_000);
        let a = pool.acquire(90_000).unwrap();
        let b = pool.acquire(90_000).unwrap();
        assert_eq!(pool.apply(ScalingDecision::ScaleIn(1), 95_000), -1);
        assert_eq!(pool.workers()[1].state, WorkerState::Draining);
        assert_eq!(pool.workers().len(), 2);
        pool.release(b, 99_000).unwrap();
        assert_eq!(pool.workers().len(), 1);
        pool.release(a, 99_000).unwrap();
        assert_eq!(pool.busy_slot_ms(), 18_000);
        assert_eq!(pool.provisioned_slot_ms(100_000), 100_000 + 99_000);
    }

    #[test]
    fn utilization_is_zero_without_ready_slots() {
        let pool = VmPool::new(config(4, 0));
        assert_eq!(pool.utilization(), 0.0);
        let mut pool = VmPool::new(config(4, 1));
        for _ in 0..3 {
            pool.acquire(0).unwrap();
        }
        assert_eq!(pool.utilization(), 0.75);
    }
}
