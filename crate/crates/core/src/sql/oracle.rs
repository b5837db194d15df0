//! Brute-force reference executor.
//!
//! Works from the bound query rather than the operator tree: it enumerates
//! the cross product of all tables with nested loops, evaluates the whole
//! predicate, groups with a sorted map and computes each aggregate from the
//! group's rows in one pass. No splitting, hashing or partial states.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use super::ast::AggFunc;
use super::exec::TableSource;
use super::plan::{AggExpr, BoundQuery, Expr};
use super::result::ResultSet;
use crate::error::{Error, Result};
use crate::value::{DataType, Row, Value};

pub fn execute_oracle(q: &BoundQuery, source: &dyn TableSource, limit: Option<usize>) -> Result<ResultSet> {
    let tables: Vec<_> = q
        .tables
        .iter()
        .map(|t| source.rows(&q.database, &t.name))
        .collect::<Result<_>>()?;

    // Conjuncts are checked as soon as every column they use is bound.
    let conjuncts: Vec<(usize, Expr)> = q
        .predicate
        .clone()
        .map(Expr::conjuncts)
        .unwrap_or_default()
        .into_iter()
        .map(|c| {
            let mut cols = Default::default();
            c.columns(&mut cols);
            let needed = cols.iter().next_back().map_or(0, |&m| m + 1);
            (needed, c)
        })
        .collect();

    let mut joined: Vec<Row> = Vec::new();
    let mut current: Row = Vec::with_capacity(q.combined.len());
    nested_loop(&tables, 0, &mut current, &conjuncts, &mut joined);

    let source_rows: Vec<Row> = match &q.aggregate {
        None => joined,
        Some(agg) => {
            let mut groups: BTreeMap<Vec<Value>, Vec<Row>> = BTreeMap::new();
            for r in joined {
                let key = agg.group_by.iter().map(|&g| r[g].clone()).collect();
                groups.entry(key).or_default().push(r);
            }
            if groups.is_empty() && agg.group_by.is_empty() {
                global_over_nothing(&agg.aggs).into_iter().collect()
            } else {
                groups
                    .into_iter()
                    .map(|(mut key, rows)| {
                        for a in &agg.aggs {
                            key.push(compute(a, &rows)?);
                        }
                        Ok(key)
                    })
                    .collect::<Result<_>>()?
            }
        }
    };

    let mut out: Vec<Row> = source_rows
        .into_iter()
        .map(|r| q.output.iter().map(|&i| r[i].clone()).collect())
        .collect();
    if q.is_ordered() {
        out.sort_by(|a, b| {
            for k in &q.order_by {
                let o = a[k.column].cmp(&b[k.column]);
                let o = if k.desc { o.reverse() } else { o };
                if o != Ordering::Equal {
                    return o;
                }
            }
            a.cmp(b)
        });
    }
    if let Some(n) = q.limit {
        out.truncate(usize::try_from(n).unwrap_or(usize::MAX));
    }
    Ok(ResultSet::new(&q.output_schema(), out, limit))
}

fn nested_loop(
    tables: &[std::sync::Arc<Vec<Row>>],
    depth: usize,
    current: &mut Row,
    conjuncts: &[(usize, Expr)],
    out: &mut Vec<Row>,
) {
    if depth == tables.len() {
        out.push(current.clone());
        return;
    }
    let before = current.len();
    for row in tables[depth].iter() {
        current.extend(row.iter().cloned());
        let width = current.len();
        let ok = conjuncts
            .iter()
            .filter(|(needed, _)| *needed <= width && (*needed > before || depth == 0))
            .all(|(_, c)| c.eval(current));
        if ok {
            nested_loop(tables, depth + 1, current, conjuncts, out);
        }
        current.truncate(before);
    }
}

fn global_over_nothing(aggs: &[AggExpr]) -> Option<Row> {
    let mut row = Vec::new();
    for a in aggs {
        row.push(match (a.func, a.input_type) {
            (AggFunc::Count, _) => Value::Int(0),
            (AggFunc::Sum, DataType::Float64) => Value::Float(0.0),
            (AggFunc::Sum, _) => Value::Int(0),
            _ => return None,
        });
    }
    Some(row)
}

fn compute(a: &AggExpr, rows: &[Row]) -> Result<Value> {
    let vals = || rows.iter().map(|r| &r[a.arg.expect("argument")]);
    let int_sum = || -> Result<i64> {
        let total: i128 = vals()
            .map(|v| match v {
                Value::Int(i) => *i as i128,
                _ => 0,
            })
            .sum();
        i64::try_from(total).map_err(|_| Error::Execution(format!("integer overflow in {}", a.name)))
    };
    let float_sum = || -> f64 { vals().filter_map(Value::as_f64).sum() };
    Ok(match a.func {
        AggFunc::Count => Value::Int(rows.len() as i64),
        AggFunc::Sum if a.input_type == DataType::Float64 => Value::Float(float_sum()),
        AggFunc::Sum => Value::Int(int_sum()?),
        AggFunc::Avg if a.input_type == DataType::Float64 => Value::Float(float_sum() / rows.len() as f64),
        AggFunc::Avg => Value::Float(int_sum()? as f64 / rows.len() as f64),
        AggFunc::Min => vals().min().cloned().expect("nonempty group"),
        AggFunc::Max => vals().max().cloned().expect("nonempty group"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sql::exec::TableCache;
    use crate::sql::plan::plan_query;
    use crate::testutil;

    fn oracle(sql: &str, tables: &[testutil::TableSpec<'_>]) -> Vec<Row> {
        let (_d, c) = testutil::catalog(tables);
        let plan = plan_query(sql, &c, "db").unwrap();
        execute_oracle(&plan.bound, &TableCache::new(c), None).unwrap().rows
    }

    const T: &[(&str, &str)] = &[("c", "int64"), ("x", "int64")];

    #[test]
    fn count_star() {
        let n = testutil::numbers(25);
        assert_eq!(oracle("SELECT COUNT(*) FROM t", &[("t", T, &n)]), vec![vec![Value::Int(25)]]);
    }

    #[test]
    fn join_with_empty_table_is_empty() {
        let n = testutil::numbers(5);
        let rows = oracle(
            "SELECT t.x FROM t JOIN e ON t.c = e.c",
            &[("t", T, &n), ("e", T, "")],
        );
        assert!(rows.is_empty());
    }

    #[test]
    fn min_picks_smallest() {
        let rows = oracle("SELECT MIN(x) FROM t", &[("t", T, "0,5\n0,2\n0,9\n")]);
        assert_eq!(rows, vec![vec![Value::Int(2)]]);
    }

    #[test]
    fn avg_is_float_and_grouped() {
        let rows = oracle(
            "SELECT c, AVG(x) FROM t GROUP BY c ORDER BY 1",
            &[("t", T, "0,1\n0,2\n1,4\n")],
        );
        assert_eq!(
            rows,
            vec![
                vec![Value::Int(0), Value::Float(1.5)],
                vec![Value::Int(1), Value::Float(4.0)]
            ]
        );
    }

    #[test]
    fn empty_global_count_is_zero() {
        let rows = oracle("SELECT COUNT(*), SUM(x) FROM t WHERE x > 100", &[("t", T, "0,1\n")]);
        assert_eq!(rows, vec![vec![Value::Int(0), Value::Int(0)]]);
    }
}
