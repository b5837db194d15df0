use crate::config::CfConfig;
use crate::error::{Error, Result};
use crate::money::Money;
use crate::Millis;

/// A worker that exists for exactly one task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CfWorker {
    pub id: u64,
    pub spawned_at: Millis,
    pub ready_at: Millis,
}

#[derive(Debug, Clone)]
pub struct CfPool {
    config: CfConfig,
    unit_price: Money,
    running: usize,
    next_id: u64,
    /// Worker-milliseconds charged so far.
    busy_ms: u128,
}

impl CfPool {
    pub fn new(config: CfConfig, unit_price: Money) -> CfPool {
        CfPool {
            config,
            unit_price,
            running: 0,
            next_id: 0,
            busy_ms: 0,
        }
    }

    pub fn unit_price(&self) -> Money {
        self.unit_price
    }

    pub fn running(&self) -> usize {
        self.running
    }

    pub fn config(&self) -> &CfConfig {
        &self.config
    }

    pub fn spawn(&mut self, n: usize, now: Millis) -> Result<Vec<CfWorker>> {
        if n == 0 {
            return Err(Error::InvalidArgument("must spawn at least one CF worker".into()));
        }
        if self.running + n > self.config.max_workers {
            return Err(Error::CfCapExceeded {
                requested: n,
                running: self.running,
                cap: self.config.max_workers,
            });
        }
        self.running += n;
        Ok((0..n)
            .map(|_| {
                self.next_id += 1;
                CfWorker {
                    id: self.next_id,
                    spawned_at: now,
                    ready_at: now + self.config.startup_lag,
                }
            })
            .collect())
    }

    /// Destroys a worker whose task ran from `started` to `now`. Returns the
    /// charged milliseconds, which is the task duration.
    pub fn finish(&mut self, worker: CfWorker, started: Millis, now: Millis) -> Result<Millis> {
        if self.running == 0 || started < worker.ready_at || now < started {
            return Err(Error::Invariant(format!("bad finish of CF worker {}", worker.id)));
        }
        self.running -= 1;
        let ms = now - started;
        self.busy_ms += ms as u128;
        Ok(ms)
    }

    /// Destroys a worker that never started its task; nothing is charged.
    pub fn cancel(&mut self, worker: CfWorker) -> Result<()> {
        if self.running == 0 {
            return Err(Error::Invariant(format!("bad cancel of CF worker {}", worker.id)));
        }
        self.running -= 1;
        Ok(())
    }

    pub fn busy_ms(&self) -> u128 {
        self.busy_ms
    }
}
