//! Partitioning of a sub-plan into parallel tasks.

use super::plan::{LogicalPlan, RowRange};
use crate::catalog::Catalog;
use crate::config::EngineConfig;
use crate::error::Result;
use crate::{Millis, QueryId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InputSplit {
    /// Contiguous rows `[start, end)` of the driving table.
    Rows {
        table: String,
        start: u64,
        end: u64,
    },
    /// Outputs of every sub-plan task of the query.
    Intermediate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub query_id: QueryId,
    pub task_id: usize,
    pub database: String,
    pub fragment: LogicalPlan,
    pub input: InputSplit,
    /// Simulated bytes the task reads.
    pub bytes: u64,
    pub estimated_work_ms: Millis,
}

/// Work time for reading `bytes` at the configured per-worker throughput,
/// rounded up to whole milliseconds and never zero.
pub fn work_ms(bytes: u64, engine: &EngineConfig) -> Millis {
    let ms = (bytes as u128 * 1000).div_ceil(engine.scan_throughput_bytes_s.max(1) as u128);
    (ms as u64).max(1)
}

/// Splits the sub-plan into at most `parallelism` tasks over contiguous row
/// ranges of its driving table, the scanned table with the most bytes. Other
/// scanned tables are read whole by every task.
pub fn make_tasks(
    query_id: QueryId,
    database: &str,
    sub: &LogicalPlan,
    catalog: &Catalog,
    parallelism: usize,
    engine: &EngineConfig,
) -> Result<Vec<Task>> {
    let scans: Vec<(String, u64, u64)> = sub
        .scanned_tables()
        .into_iter()
        .map(|t| catalog.table(database, &t).map(|d| (t, d.row_count, d.byte_size)))
        .collect::<Result<_>>()?;
    let driving = scans
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.2.cmp(&b.2).then(ib.cmp(ia)))
        .map(|(i, _)| i)
        .expect("a sub-plan scans at least one table");
    let (table, rows, bytes) = scans[driving].clone();
    let others: u64 = scans
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != driving)
        .map(|(_, s)| s.2)
        .sum();

    let k = (parallelism.max(1) as u64).min(rows).max(1);
    let mut tasks = Vec::with_capacity(k as usize);
    for i in 0..k {
        let start = rows * i / k;
        let end = rows * (i + 1) / k;
        let range_bytes = if rows == 0 {
            0
        } else {
            (bytes as u128 * end as u128 / rows as u128 - bytes as u128 * start as u128 / rows as u128)
                as u64
        };
        let task_bytes = (range_bytes + others).saturating_mul(engine.data_scale);
        tasks.push(Task {
            query_id,
            task_id: i as usize,
            database: database.to_string(),
            fragment: with_range(sub, driving, RowRange { start, end }),
            input: InputSplit::Rows {
                table: table.clone(),
                start,
                end,
            },
            bytes: task_bytes,
            estimated_work_ms: work_ms(task_bytes, engine),
        });
    }
    Ok(tasks)
}

fn with_range(plan: &LogicalPlan, target: usize, range: RowRange) -> LogicalPlan {
    let mut seen = 0;
    rewrite(plan, target, range, &mut seen)
}

fn rewrite(plan: &LogicalPlan, target: usize, r: RowRange, seen: &mut usize) -> LogicalPlan {
    if let LogicalPlan::Scan {
        table,
        alias,
        schema,
        range,
    } = plan
    {
        let this = *seen;
        *seen += 1;
        return LogicalPlan::Scan {
            table: table.clone(),
            alias: alias.clone(),
            schema: schema.clone(),
            range: if this == target { Some(r) } else { *range },
        };
    }
    let mut go = |p: &LogicalPlan| Box::new(rewrite(p, target, r, seen));
    match plan {
        LogicalPlan::Scan { .. } => unreachable!("handled above"),
        LogicalPlan::Intermediate { schema } => LogicalPlan::Intermediate {
            schema: schema.clone(),
        },
        LogicalPlan::Filter { input, predicate } => LogicalPlan::Filter {
            input: go(input),
            predicate: predicate.clone(),
        },
        LogicalPlan::Project {
            input,
            columns,
            names,
        } => LogicalPlan::Project {
            input: go(input),
            columns: columns.clone(),
            names: names.clone(),
        },
        LogicalPlan::HashJoin { left, right, keys } => {
            let left = go(left);
            let right = go(right);
            LogicalPlan::HashJoin {
                left,
                right,
                keys: keys.clone(),
            }
        }
        LogicalPlan::Aggregate {
            input,
            group_by,
            aggs,
            mode,
        } => LogicalPlan::Aggregate {
            input: go(input),
            group_by: group_by.clone(),
            aggs: aggs.clone(),
            mode: *mode,
        },
        LogicalPlan::Sort { input, keys } => LogicalPlan::Sort {
            input: go(input),
            keys: keys.clone(),
        },
        LogicalPlan::Limit { input, n } => LogicalPlan::Limit { input: go(input), n: *n },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sql::plan::plan_query;
    use crate::sql::split::split_plan;
    use crate::testutil;

    fn engine() -> EngineConfig {
        EngineConfig {
            scan_throughput_bytes_s: 1000,
            data_scale: 1,
        }
    }

    fn tasks(rows: usize, p: usize) -> Vec<Task> {
        let (_d, c) = testutil::catalog(&[("t", &[("c", "int64"), ("x", "int64")], &testutil::numbers(rows))]);
        let plan = plan_query("SELECT COUNT(*) FROM t", &c, "db").unwrap();
        make_tasks(7, "db", &split_plan(&plan.root).sub, &c, p, &engine()).unwrap()
    }

    fn range(t: &Task) -> (u64, u64) {
        match &t.input {
            InputSplit::Rows { start, end, .. } => (*start, *end),
            InputSplit::Intermediate => panic!("sub-plan task reads rows"),
        }
    }

    #[test]
    fn parallelism_one_gives_one_task() {
        let ts = tasks(10, 1);
        assert_eq!(ts.len(), 1);
        assert_eq!(range(&ts[0]), (0, 10));
    }

    #[test]
    fn rows_split_evenly_and_cover_the_table() {
        let ts = tasks(1000, 4);
        assert_eq!(ts.len(), 4);
        let ranges: Vec<_> = ts.iter().map(range).collect();
        assert_eq!(ranges, vec![(0, 250), (250, 500), (500, 750), (750, 1000)]);
        let total: u64 = ts.iter().map(|t| t.bytes).sum();
        let (_d, c) = testutil::catalog(&[("t", &[("c", "int64"), ("x", "int64")], &testutil::numbers(1000))]);
        assert_eq!(total, c.table("db", "t").unwrap().byte_size);
        assert!(ts.iter().all(|t| t.query_id == 7));
    }

    #[test]
    fn empty_table_gives_one_task() {
        let ts = tasks(0, 8);
        assert_eq!(ts.len(), 1);
        assert_eq!(range(&ts[0]), (0, 0));
        assert_eq!(ts[0].estimated_work_ms, 1);
    }

    #[test]
    fn tasks_never_outnumber_rows() {
        assert_eq!(tasks(3, 8).len(), 3);
    }

    #[test]
    fn work_rounds_up_to_whole_ms() {
        let e = engine();
        assert_eq!(work_ms(0, &e), 1);
        assert_eq!(work_ms(1000, &e), 1000);
        assert_eq!(work_ms(1001, &e), 1001);
        let e = EngineConfig {
            scan_throughput_bytes_s: 3000,
            data_scale: 1,
        };
        assert_eq!(work_ms(1, &e), 1);
        assert_eq!(work_ms(3001, &e), 1001);
    }
}
