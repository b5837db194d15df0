//! Division of a plan into a pushdown sub-plan and a top-level plan.
//!
//! The sub-plan holds every scan, filter, join and projection below the
//! aggregate, ending in a partial aggregate when the query aggregates. It is
//! what gets partitioned into tasks. The top-level plan reads the union of
//! all task outputs as a virtual table and applies the aggregate merge,
//! final projection, sort and limit.

use super::plan::{AggMode, LogicalPlan};

#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub sub: LogicalPlan,
    pub top: LogicalPlan,
}

impl SplitPlan {
    /// True when the top plan only concatenates task outputs.
    pub fn top_is_pass_through(&self) -> bool {
        matches!(self.top, LogicalPlan::Intermediate { .. })
    }
}

enum Wrapper {
    Limit(u64),
    Sort(Vec<super::plan::SortKey>),
    Project(Vec<usize>, Vec<String>),
}

pub fn split_plan(plan: &LogicalPlan) -> SplitPlan {
    let mut wrappers = Vec::new();
    let mut node = plan.clone();
    let body = loop {
        match node {
            LogicalPlan::Limit { input, n } => {
                wrappers.push(Wrapper::Limit(n));
                node = *input;
            }
            LogicalPlan::Sort { input, keys } => {
                wrappers.push(Wrapper::Sort(keys));
                node = *input;
            }
            LogicalPlan::Project {
                input,
                columns,
                names,
            } if matches!(*input, LogicalPlan::Aggregate { .. }) => {
                wrappers.push(Wrapper::Project(columns, names));
                node = *input;
            }
            other => break other,
        }
    };

    let (sub, mut top) = match body {
        LogicalPlan::Aggregate {
            input,
            group_by,
            aggs,
            mode: AggMode::Full,
        } => {
            let groups = group_by.len();
            let sub = LogicalPlan::Aggregate {
                input,
                group_by,
                aggs: aggs.clone(),
                mode: AggMode::Partial,
            };
            let top = LogicalPlan::Aggregate {
                input: Box::new(LogicalPlan::Intermediate {
                    schema: sub.schema(),
                }),
                group_by: (0..groups).collect(),
                aggs,
                mode: AggMode::Merge,
            };
            (sub, top)
        }
        body => {
            let top = LogicalPlan::Intermediate {
                schema: body.schema(),
            };
            (body, top)
        }
    };

    for w in wrappers.into_iter().rev() {
        top = match w {
            Wrapper::Limit(n) => LogicalPlan::Limit {
                input: Box::new(top),
                n,
            },
            Wrapper::Sort(keys) => LogicalPlan::Sort {
                input: Box::new(top),
                keys,
            },
            Wrapper::Project(columns, names) => LogicalPlan::Project {
                input: Box::new(top),
                columns,
                names,
            },
        };
    }
    SplitPlan { sub, top }
}
