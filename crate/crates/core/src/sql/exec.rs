//! Row-at-a-time execution of plan fragments.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use indexmap::IndexMap;

use super::ast::AggFunc;
use super::plan::{AggExpr, AggMode, LogicalPlan, SortKey};
use crate::catalog::{Catalog, TableDef};
use crate::error::{Error, Result};
use crate::value::{DataType, Row, Value};

/// Supplies the rows of base tables.
pub trait TableSource: Send + Sync {
    fn rows(&self, database: &str, table: &str) -> Result<Arc<Vec<Row>>>;
}

/// Reads and parses every data file of a table.
pub fn read_table(def: &TableDef) -> Result<Vec<Row>> {
    let mut rows = Vec::with_capacity(def.row_count as usize);
    for path in &def.data_files {
        let fail = |e: &dyn std::fmt::Display| Error::Execution(format!("{}: {e}", path.display()));
        let mut reader = csv::Reader::from_path(path).map_err(|e| fail(&e))?;
        for rec in reader.records() {
            let rec = rec.map_err(|e| fail(&e))?;
            if rec.len() != def.columns.len() {
                return Err(fail(&format!(
                    "expected {} fields, found {}",
                    def.columns.len(),
                    rec.len()
                )));
            }
            rows.push(
                rec.iter()
                    .zip(&def.columns)
                    .map(|(text, c)| Value::parse(text, c.dtype))
                    .collect::<Result<Row>>()?,
            );
        }
    }
    Ok(rows)
}

type TableKey = (String, String);

/// Tables parsed once and shared, like the warm memory of a VM worker.
#[derive(Debug)]
pub struct TableCache {
    catalog: Arc<Catalog>,
    tables: Mutex<HashMap<TableKey, Arc<Vec<Row>>>>,
}

impl TableCache {
    pub fn new(catalog: Arc<Catalog>) -> TableCache {
        TableCache {
            catalog,
            tables: Mutex::new(HashMap::new()),
        }
    }
}

impl TableSource for TableCache {
    fn rows(&self, database: &str, table: &str) -> Result<Arc<Vec<Row>>> {
        let k = (database.to_string(), table.to_string());
        if let Some(rows) = self.tables.lock().expect("cache lock").get(&k) {
            return Ok(rows.clone());
        }
        let rows = Arc::new(read_table(self.catalog.table(database, table)?)?);
        self.tables
            .lock()
            .expect("cache lock")
            .entry(k)
            .or_insert_with(|| rows.clone());
        Ok(rows)
    }
}

/// Reads tables from their files on every request, like a fresh ephemeral
/// worker with nothing cached.
#[derive(Debug, Clone)]
pub struct ColdReader {
    catalog: Arc<Catalog>,
}

impl ColdReader {
    pub fn new(catalog: Arc<Catalog>) -> ColdReader {
        ColdReader { catalog }
    }
}

impl TableSource for ColdReader {
    fn rows(&self, database: &str, table: &str) -> Result<Arc<Vec<Row>>> {
        Ok(Arc::new(read_table(self.catalog.table(database, table)?)?))
    }
}

/// Where a fragment's leaves read from.
pub struct FragmentInput<'a> {
    pub database: &'a str,
    pub source: &'a dyn TableSource,
    /// Rows standing in for an `Intermediate` leaf.
    pub intermediate: &'a [Row],
}

pub fn execute(plan: &LogicalPlan, input: &FragmentInput<'_>) -> Result<Vec<Row>> {
    match plan {
        LogicalPlan::Scan { table, range, .. } => {
            let rows = input.source.rows(input.database, table)?;
            let (start, end) = match range {
                Some(r) => (
                    (r.start as usize).min(rows.len()),
                    (r.end as usize).min(rows.len()),
                ),
                None => (0, rows.len()),
            };
            Ok(rows[start..end.max(start)].to_vec())
        }
        LogicalPlan::Intermediate { .. } => Ok(input.intermediate.to_vec()),
        LogicalPlan::Filter { input: child, predicate } => {
            let mut rows = execute(child, input)?;
            rows.retain(|r| predicate.eval(r));
            Ok(rows)
        }
        LogicalPlan::Project {
            input: child,
            columns,
            ..
        } => Ok(execute(child, input)?
            .into_iter()
            .map(|r| columns.iter().map(|&c| r[c].clone()).collect())
            .collect()),
        LogicalPlan::HashJoin { left, right, keys } => {
            let right_rows = execute(right, input)?;
            let mut table: HashMap<Vec<Value>, Vec<usize>> = HashMap::new();
            for (i, r) in right_rows.iter().enumerate() {
                let k = keys.iter().map(|&(_, rc)| join_key(&r[rc])).collect();
                table.entry(k).or_default().push(i);
            }
            let mut out = Vec::new();
            for l in execute(left, input)? {
                let k: Vec<Value> = keys.iter().map(|&(lc, _)| join_key(&l[lc])).collect();
                if let Some(matches) = table.get(&k) {
                    for &i in matches {
                        let mut row = l.clone();
                        row.extend(right_rows[i].iter().cloned());
                        out.push(row);
                    }
                }
            }
            Ok(out)
        }
        LogicalPlan::Aggregate {
            input: child,
            group_by,
            aggs,
            mode,
        } => aggregate(execute(child, input)?, group_by, aggs, *mode),
        LogicalPlan::Sort { input: child, keys } => {
            let mut rows = execute(child, input)?;
            sort_rows(&mut rows, keys);
            Ok(rows)
        }
        LogicalPlan::Limit { input: child, n } => {
            let mut rows = execute(child, input)?;
            rows.truncate(usize::try_from(*n).unwrap_or(usize::MAX));
            Ok(rows)
        }
    }
}

/// Equality key for hashing: folds negative zero into zero so that hash
/// equality agrees with SQL comparison.
fn join_key(v: &Value) -> Value {
    match v {
        Value::Float(f) if *f == 0.0 => Value::Float(0.0),
        other => other.clone(),
    }
}

/// Orders by the keys, then by the whole row.
pub fn sort_rows(rows: &mut [Row], keys: &[SortKey]) {
    rows.sort_by(|a, b| {
        keys.iter()
            .map(|k| {
                let o = a[k.column].cmp(&b[k.column]);
                if k.desc {
                    o.reverse()
                } else {
                    o
                }
            })
            .find(|o| o.is_ne())
            .unwrap_or_else(|| a.cmp(b))
    });
}

#[derive(Debug, Clone)]
enum Acc {
    Count(i64),
    SumInt(i64),
    SumFloat(f64),
    AvgInt { sum: i64, count: i64 },
    AvgFloat { sum: f64, count: i64 },
    Min(Option<Value>),
    Max(Option<Value>),
}

fn overflow(agg: &AggExpr) -> Error {
    Error::Execution(format!("integer overflow in {}", agg.name))
}

impl Acc {
    fn new(agg: &AggExpr) -> Acc {
        let float = agg.input_type == DataType::Float64;
        match agg.func {
            AggFunc::Count => Acc::Count(0),
            AggFunc::Sum if float => Acc::SumFloat(0.0),
            AggFunc::Sum => Acc::SumInt(0),
            AggFunc::Avg if float => Acc::AvgFloat { sum: 0.0, count: 0 },
            AggFunc::Avg => Acc::AvgInt { sum: 0, count: 0 },
            AggFunc::Min => Acc::Min(None),
            AggFunc::Max => Acc::Max(None),
        }
    }

    fn add_int(acc: &mut i64, v: i64, agg: &AggExpr) -> Result<()> {
        *acc = acc.checked_add(v).ok_or_else(|| overflow(agg))?;
        Ok(())
    }

    fn update(&mut self, agg: &AggExpr, row: &[Value]) -> Result<()> {
        let arg = agg.arg.map(|i| &row[i]);
        match (self, arg) {
            (Acc::Count(n), _) => *n += 1,
            (Acc::SumInt(s), Some(Value::Int(v))) => Acc::add_int(s, *v, agg)?,
            (Acc::SumFloat(s), Some(Value::Float(v))) => *s += v,
            (Acc::AvgInt { sum, count }, Some(Value::Int(v))) => {
                Acc::add_int(sum, *v, agg)?;
                *count += 1;
            }
            (Acc::AvgFloat { sum, count }, Some(Value::Float(v))) => {
                *sum += v;
                *count += 1;
            }
            (Acc::Min(m), Some(v)) => {
                if m.as_ref().is_none_or(|cur| v < cur) {
                    *m = Some(v.clone());
                }
            }
            (Acc::Max(m), Some(v)) => {
                if m.as_ref().is_none_or(|cur| v > cur) {
                    *m = Some(v.clone());
                }
            }
            _ => return Err(Error::Invariant(format!("bad input for {}", agg.name))),
        }
        Ok(())
    }

    /// Folds a partial state, laid out as by [`AggExpr::partial_fields`].
    fn merge(&mut self, agg: &AggExpr, part: &[Value]) -> Result<()> {
        match (self, part) {
            (Acc::Count(n), [Value::Int(c)]) => Acc::add_int(n, *c, agg)?,
            (Acc::SumInt(s), [Value::Int(v)]) => Acc::add_int(s, *v, agg)?,
            (Acc::SumFloat(s), [Value::Float(v)]) => *s += v,
            (Acc::AvgInt { sum, count }, [Value::Int(s), Value::Int(c)]) => {
                Acc::add_int(sum, *s, agg)?;
                *count += c;
            }
            (Acc::AvgFloat { sum, count }, [Value::Float(s), Value::Int(c)]) => {
                *sum += s;
                *count += c;
            }
            (acc @ (Acc::Min(_) | Acc::Max(_)), [v]) => {
                let shim = AggExpr {
                    arg: Some(0),
                    ..agg.clone()
                };
                acc.update(&shim, std::slice::from_ref(v))?;
            }
            _ => return Err(Error::Invariant(format!("bad partial state for {}", agg.name))),
        }
        Ok(())
    }

    fn partial(self) -> Vec<Value> {
        match self {
            Acc::Count(n) => vec![Value::Int(n)],
            Acc::SumInt(s) => vec![Value::Int(s)],
            Acc::SumFloat(s) => vec![Value::Float(s)],
            Acc::AvgInt { sum, count } => vec![Value::Int(sum), Value::Int(count)],
            Acc::AvgFloat { sum, count } => vec![Value::Float(sum), Value::Int(count)],
            Acc::Min(v) | Acc::Max(v) => vec![v.expect("groups have at least one row")],
        }
    }

    fn finish(self) -> Value {
        match self {
            Acc::Count(n) => Value::Int(n),
            Acc::SumInt(s) => Value::Int(s),
            Acc::SumFloat(s) => Value::Float(s),
            Acc::AvgInt { sum, count } => Value::Float(sum as f64 / count as f64),
            Acc::AvgFloat { sum, count } => Value::Float(sum / count as f64),
            Acc::Min(v) | Acc::Max(v) => v.expect("groups have at least one row"),
        }
    }
}

/// Value of a global aggregate over zero rows, if it has one. COUNT and SUM
/// are 0; with no NULLs in the data model AVG, MIN and MAX have no value,
/// and a global aggregate containing any of them yields no row.
pub fn empty_global_row(aggs: &[AggExpr]) -> Option<Row> {
    aggs.iter()
        .map(|a| match a.func {
            AggFunc::Count => Some(Value::Int(0)),
            AggFunc::Sum if a.input_type == DataType::Float64 => Some(Value::Float(0.0)),
            AggFunc::Sum => Some(Value::Int(0)),
            _ => None,
        })
        .collect()
}

fn aggregate(rows: Vec<Row>, group_by: &[usize], aggs: &[AggExpr], mode: AggMode) -> Result<Vec<Row>> {
    let widths: Vec<usize> = aggs.iter().map(|a| a.partial_fields().len()).collect();
    let mut groups: IndexMap<Vec<Value>, Vec<Acc>> = IndexMap::new();
    for row in rows {
        let key: Vec<Value> = group_by.iter().map(|&g| row[g].clone()).collect();
        let accs = groups
            .entry(key)
            .or_insert_with(|| aggs.iter().map(Acc::new).collect());
        match mode {
            AggMode::Full | AggMode::Partial => {
                for (acc, agg) in accs.iter_mut().zip(aggs) {
                    acc.update(agg, &row)?;
                }
            }
            AggMode::Merge => {
                let mut at = group_by.len();
                for ((acc, agg), w) in accs.iter_mut().zip(aggs).zip(&widths) {
                    acc.merge(agg, &row[at..at + w])?;
                    at += w;
                }
            }
        }
    }
    if groups.is_empty() && group_by.is_empty() && mode != AggMode::Partial {
        return Ok(empty_global_row(aggs).into_iter().collect());
    }
    Ok(groups
        .into_iter()
        .map(|(mut key, accs)| {
            for acc in accs {
                match mode {
                    AggMode::Partial => key.extend(acc.partial()),
                    AggMode::Full | AggMode::Merge => key.push(acc.finish()),
                }
            }
            key
        })
        .collect())
}
