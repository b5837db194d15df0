//! SQL subset: parsing, planning, plan splitting and execution.
//!
//! Supported: a single `SELECT` block over at most three tables joined by
//! column equalities (`JOIN .. ON` or `WHERE` conjuncts), `WHERE` with
//! comparisons, `AND`, `OR` and `NOT`, `GROUP BY` columns, the aggregates
//! `COUNT`, `SUM`, `AVG`, `MIN`, `MAX`, `ORDER BY` column, aggregate or
//! ordinal, and `LIMIT`. Keywords are case-insensitive, identifiers are not.

pub mod ast;
pub mod engine;
pub mod exec;
pub mod lexer;
pub mod oracle;
pub mod parser;
pub mod plan;
pub mod result;
pub mod split;
pub mod store;
pub mod task;

pub use engine::{Engine, ExecPath};
pub use oracle::execute_oracle;
pub use plan::{plan_query, BoundQuery, LogicalPlan, QueryPlan};
pub use result::ResultSet;
pub use split::{split_plan, SplitPlan};
pub use store::IntermediateStore;
pub use task::{make_tasks, Task};
