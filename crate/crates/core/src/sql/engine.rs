//! Runs split plans: sub-plan tasks on a chosen execution path, outputs into
//! the intermediate store, then the top-level plan over the union.

use std::sync::Arc;

use super::exec::{execute, ColdReader, FragmentInput, TableCache, TableSource};
use super::plan::QueryPlan;
use super::result::ResultSet;
use super::split::{split_plan, SplitPlan};
use super::store::{csv_bytes, IntermediateStore};
use super::task::{make_tasks, Task};
use crate::catalog::Catalog;
use crate::config::EngineConfig;
use crate::error::{Error, Result};
use crate::value::Row;
use crate::QueryId;

/// Kind of worker a fragment runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExecPath {
    /// A slot on a long-lived VM worker that keeps tables in memory.
    VmSlot,
    /// A fresh cloud-function worker that reads its inputs from storage.
    CfEphemeral,
}

pub struct Engine {
    catalog: Arc<Catalog>,
    cache: TableCache,
    cold: ColdReader,
    store: IntermediateStore,
    config: EngineConfig,
    /// When false, ephemeral workers read through the shared cache too; the
    /// simulator uses this so that thousands of fragments stay cheap.
    cold_ephemeral_reads: bool,
}

impl Engine {
    pub fn new(catalog: Arc<Catalog>, store: IntermediateStore, config: EngineConfig) -> Engine {
        Engine {
            cache: TableCache::new(catalog.clone()),
            cold: ColdReader::new(catalog.clone()),
            catalog,
            store,
            config,
            cold_ephemeral_reads: true,
        }
    }

    pub fn with_cold_ephemeral_reads(mut self, on: bool) -> Engine {
        self.cold_ephemeral_reads = on;
        self
    }

    pub fn catalog(&self) -> &Arc<Catalog> {
        &self.catalog
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn store(&self) -> &IntermediateStore {
        &self.store
    }

    fn source(&self, path: ExecPath) -> &dyn TableSource {
        match path {
            ExecPath::CfEphemeral if self.cold_ephemeral_reads => &self.cold,
            _ => &self.cache,
        }
    }

    pub fn tasks(
        &self,
        query_id: QueryId,
        plan: &QueryPlan,
        split: &SplitPlan,
        parallelism: usize,
    ) -> Result<Vec<Task>> {
        make_tasks(query_id, plan.database(), &split.sub, &self.catalog, parallelism, &self.config)
    }

    /// Executes one sub-plan task and stores its output. Returns the number
    /// of rows written.
    pub fn run_task(&self, task: &Task, path: ExecPath) -> Result<usize> {
        let rows = execute(
            &task.fragment,
            &FragmentInput {
                database: &task.database,
                source: self.source(path),
                intermediate: &[],
            },
        )?;
        let n = rows.len();
        self.store
            .put(task.query_id, task.task_id, &task.fragment.schema(), rows)?;
        Ok(n)
    }

    /// Gathers all task outputs in task order. Returns the rows and their
    /// size as CSV.
    pub fn gather(&self, query_id: QueryId, split: &SplitPlan, tasks: usize) -> Result<(Vec<Row>, u64)> {
        let schema = split.sub.schema();
        let mut rows = Vec::new();
        for t in 0..tasks {
            rows.extend(self.store.get(query_id, t, &schema)?);
        }
        let bytes = csv_bytes(&rows);
        Ok((rows, bytes))
    }

    /// Runs the top-level plan over gathered rows.
    pub fn run_top(&self, plan: &QueryPlan, split: &SplitPlan, rows: &[Row], limit: Option<usize>) -> Result<ResultSet> {
        let out = execute(
            &split.top,
            &FragmentInput {
                database: plan.database(),
                source: &self.cache,
                intermediate: rows,
            },
        )?;
        Ok(ResultSet::new(&plan.root.schema(), out, limit))
    }

    /// Runs a whole query synchronously. Ephemeral tasks each get their own
    /// thread, as each would get its own worker.
    pub fn run_query(
        &self,
        query_id: QueryId,
        plan: &QueryPlan,
        parallelism: usize,
        path: ExecPath,
        limit: Option<usize>,
    ) -> Result<ResultSet> {
        let split = split_plan(&plan.root);
        let tasks = self.tasks(query_id, plan, &split, parallelism)?;
        match path {
            ExecPath::VmSlot => {
                for t in &tasks {
                    self.run_task(t, path)?;
                }
            }
            ExecPath::CfEphemeral => {
                std::thread::scope(|s| {
                    let handles: Vec<_> = tasks
                        .iter()
                        .map(|t| s.spawn(move || self.run_task(t, path)))
                        .collect();
                    handles
                        .into_iter()
                        .map(|h| h.join().map_err(|_| Error::Execution("worker panicked".into()))?)
                        .collect::<Result<Vec<_>>>()
                })?;
            }
        }
        let gathered = self.gather(query_id, &split, tasks.len());
        self.store.release(query_id);
        let (rows, _) = gathered?;
        self.run_top(plan, &split, &rows, limit)
    }
}
