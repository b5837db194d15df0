//! Logical plans and the binder that produces them.
//!
//! Planning is two steps. [`bind`] resolves names and types into a
//! [`BoundQuery`], a flat description of what the query means: the tables,
//! one combined predicate, grouping, output columns, ordering and limit.
//! [`build_plan`] then turns that into an operator tree, pushing single-table
//! predicates into scans and turning cross-table column equalities into hash
//! join keys. The oracle executor works from the bound query alone, so it
//! shares name resolution with the planner but none of the plan shaping.

use std::collections::BTreeSet;
use std::fmt;

use super::ast::{self, AggFunc, AstExpr, CmpOp, ColumnRef, Literal, OrderTarget, SelectExpr, SelectItem};
use crate::catalog::{Catalog, TableDef};
use crate::error::{Error, Result};
use crate::value::{parse_date, DataType, Value};

pub const MAX_TABLES: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub name: String,
    /// Table alias the column came from, when it came from a table.
    pub qualifier: Option<String>,
    pub dtype: DataType,
}

pub type Schema = Vec<Field>;

/// Predicate expression over column positions of the operator's input.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Column(usize),
    Literal(Value),
    Compare {
        op: CmpOp,
        left: Box<Expr>,
        right: Box<Expr>,
    },
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
}

impl Expr {
    pub fn columns(&self, out: &mut BTreeSet<usize>) {
        match self {
            Expr::Column(i) => {
                out.insert(*i);
            }
            Expr::Literal(_) => {}
            Expr::Compare { left, right, .. } | Expr::And(left, right) | Expr::Or(left, right) => {
                left.columns(out);
                right.columns(out);
            }
            Expr::Not(e) => e.columns(out),
        }
    }

    /// Same expression with every column position mapped through `f`.
    pub fn remap(&self, f: &impl Fn(usize) -> usize) -> Expr {
        match self {
            Expr::Column(i) => Expr::Column(f(*i)),
            Expr::Literal(v) => Expr::Literal(v.clone()),
            Expr::Compare { op, left, right } => Expr::Compare {
                op: *op,
                left: Box::new(left.remap(f)),
                right: Box::new(right.remap(f)),
            },
            Expr::And(a, b) => Expr::And(Box::new(a.remap(f)), Box::new(b.remap(f))),
            Expr::Or(a, b) => Expr::Or(Box::new(a.remap(f)), Box::new(b.remap(f))),
            Expr::Not(e) => Expr::Not(Box::new(e.remap(f))),
        }
    }

    pub fn conjuncts(self) -> Vec<Expr> {
        match self {
            Expr::And(a, b) => {
                let mut v = a.conjuncts();
                v.extend(b.conjuncts());
                v
            }
            e => vec![e],
        }
    }

    pub fn conjoin(mut parts: Vec<Expr>) -> Option<Expr> {
        let first = if parts.is_empty() {
            return None;
        } else {
            parts.remove(0)
        };
        Some(
            parts
                .into_iter()
                .fold(first, |acc, e| Expr::And(Box::new(acc), Box::new(e))),
        )
    }

    /// Evaluates the predicate against a row. Planner type checks guarantee
    /// that every comparison is between comparable values.
    pub fn eval(&self, row: &[Value]) -> bool {
        match self {
            Expr::Column(i) => matches!(row[*i], Value::Bool(true)),
            Expr::Literal(v) => matches!(v, Value::Bool(true)),
            Expr::Compare { op, left, right } => {
                let l = left.operand(row);
                let r = right.operand(row);
                l.sql_cmp(r).is_some_and(|ord| op.holds(ord))
            }
            Expr::And(a, b) => a.eval(row) && b.eval(row),
            Expr::Or(a, b) => a.eval(row) || b.eval(row),
            Expr::Not(e) => !e.eval(row),
        }
    }

    fn operand<'a>(&'a self, row: &'a [Value]) -> &'a Value {
        match self {
            Expr::Column(i) => &row[*i],
            Expr::Literal(v) => v,
            _ => unreachable!("comparison operands are columns or literals"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AggExpr {
    pub func: AggFunc,
    /// Input column position; `None` for `COUNT(*)`.
    pub arg: Option<usize>,
    /// Type of the argument column (`int64` for `COUNT(*)`).
    pub input_type: DataType,
    pub name: String,
}

impl AggExpr {
    pub fn output_type(&self) -> DataType {
        match self.func {
            AggFunc::Count => DataType::Int64,
            AggFunc::Avg => DataType::Float64,
            AggFunc::Sum | AggFunc::Min | AggFunc::Max => self.input_type,
        }
    }

    /// Columns this aggregate occupies in a partial-aggregate row.
    pub fn partial_fields(&self) -> Vec<Field> {
        let f = |suffix: &str, dtype| Field {
            name: format!("{}#{suffix}", self.name),
            qualifier: None,
            dtype,
        };
        match self.func {
            AggFunc::Count => vec![f("count", DataType::Int64)],
            AggFunc::Sum => vec![f("sum", self.input_type)],
            AggFunc::Avg => vec![f("sum", self.input_type), f("count", DataType::Int64)],
            AggFunc::Min => vec![f("min", self.input_type)],
            AggFunc::Max => vec![f("max", self.input_type)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggMode {
    /// Raw rows in, final values out.
    Full,
    /// Raw rows in, mergeable partial states out (AVG as sum and count).
    Partial,
    /// Partial states in, final values out.
    Merge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SortKey {
    pub column: usize,
    pub desc: bool,
}

/// Half-open row range of a table, in file order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowRange {
    pub start: u64,
    pub end: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LogicalPlan {
    Scan {
        table: String,
        alias: String,
        schema: Schema,
        range: Option<RowRange>,
    },
    /// Rows produced by a pushed-down sub-plan.
    Intermediate { schema: Schema },
    Filter {
        input: Box<LogicalPlan>,
        predicate: Expr,
    },
    Project {
        input: Box<LogicalPlan>,
        columns: Vec<usize>,
        names: Vec<String>,
    },
    HashJoin {
        left: Box<LogicalPlan>,
        right: Box<LogicalPlan>,
        /// `(left column, right column)` equalities.
        keys: Vec<(usize, usize)>,
    },
    Aggregate {
        input: Box<LogicalPlan>,
        group_by: Vec<usize>,
        aggs: Vec<AggExpr>,
        mode: AggMode,
    },
    /// Orders by `keys`, then by the whole row ascending.
    Sort {
        input: Box<LogicalPlan>,
        keys: Vec<SortKey>,
    },
    Limit { input: Box<LogicalPlan>, n: u64 },
}

impl LogicalPlan {
    pub fn schema(&self) -> Schema {
        match self {
            LogicalPlan::Scan { schema, .. } | LogicalPlan::Intermediate { schema } => schema.clone(),
            LogicalPlan::Filter { input, .. }
            | LogicalPlan::Sort { input, .. }
            | LogicalPlan::Limit { input, .. } => input.schema(),
            LogicalPlan::Project {
                input,
                columns,
                names,
            } => {
                let inner = input.schema();
                columns
                    .iter()
                    .zip(names)
                    .map(|(&c, n)| Field {
                        name: n.clone(),
                        qualifier: inner[c].qualifier.clone(),
                        dtype: inner[c].dtype,
                    })
                    .collect()
            }
            LogicalPlan::HashJoin { left, right, .. } => {
                let mut s = left.schema();
                s.extend(right.schema());
                s
            }
            LogicalPlan::Aggregate {
                input,
                group_by,
                aggs,
                mode,
            } => {
                let inner = input.schema();
                let mut s: Schema = group_by.iter().map(|&g| inner[g].clone()).collect();
                match mode {
                    AggMode::Partial => s.extend(aggs.iter().flat_map(AggExpr::partial_fields)),
                    AggMode::Full | AggMode::Merge => s.extend(aggs.iter().map(|a| Field {
                        name: a.name.clone(),
                        qualifier: None,
                        dtype: a.output_type(),
                    })),
                }
                s
            }
        }
    }

    pub fn children(&self) -> Vec<&LogicalPlan> {
        match self {
            LogicalPlan::Scan { .. } | LogicalPlan::Intermediate { .. } => vec![],
            LogicalPlan::Filter { input, .. }
            | LogicalPlan::Project { input, .. }
            | LogicalPlan::Aggregate { input, .. }
            | LogicalPlan::Sort { input, .. }
            | LogicalPlan::Limit { input, .. } => vec![input],
            LogicalPlan::HashJoin { left, right, .. } => vec![left, right],
        }
    }

    /// Scan leaves in left-to-right order.
    pub fn scans(&self) -> Vec<&LogicalPlan> {
        match self {
            LogicalPlan::Scan { .. } => vec![self],
            _ => self.children().into_iter().flat_map(|c| c.scans()).collect(),
        }
    }

    pub fn scanned_tables(&self) -> Vec<String> {
        self.scans()
            .into_iter()
            .filter_map(|s| match s {
                LogicalPlan::Scan { table, .. } => Some(table.clone()),
                _ => None,
            })
            .collect()
    }

    /// Compact operator chain such as `Limit(3)→Sort→Aggregate→Scan(t)`.
    pub fn shape(&self) -> String {
        match self {
            LogicalPlan::Scan { table, .. } => format!("Scan({table})"),
            LogicalPlan::Intermediate { .. } => "Intermediate".into(),
            LogicalPlan::Filter { input, .. } => format!("Filter→{}", input.shape()),
            LogicalPlan::Project { input, names, .. } => {
                format!("Project({})→{}", names.join(","), input.shape())
            }
            LogicalPlan::HashJoin { left, right, .. } => {
                format!("HashJoin({},{})", left.shape(), right.shape())
            }
            LogicalPlan::Aggregate { input, mode, .. } => {
                let tag = match mode {
                    AggMode::Full => "Aggregate",
                    AggMode::Partial => "PartialAggregate",
                    AggMode::Merge => "MergeAggregate",
                };
                format!("{tag}→{}", input.shape())
            }
            LogicalPlan::Sort { input, .. } => format!("Sort→{}", input.shape()),
            LogicalPlan::Limit { input, n } => format!("Limit({n})→{}", input.shape()),
        }
    }
}

impl fmt::Display for LogicalPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.shape())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundTable {
    pub name: String,
    pub alias: String,
    /// Position of the table's first column in the combined row.
    pub offset: usize,
    pub schema: Schema,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundAggregate {
    /// Grouping columns, as positions in the combined row.
    pub group_by: Vec<usize>,
    pub aggs: Vec<AggExpr>,
}

/// Meaning of a validated query, independent of any operator tree.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundQuery {
    pub database: String,
    pub tables: Vec<BoundTable>,
    /// Concatenation of every table's columns in FROM order.
    pub combined: Schema,
    /// All ON and WHERE conditions, over combined positions.
    pub predicate: Option<Expr>,
    pub aggregate: Option<BoundAggregate>,
    /// Output columns: positions in the combined row, or in the aggregate
    /// output (`group_by` then `aggs`) when aggregating.
    pub output: Vec<usize>,
    pub output_names: Vec<String>,
    pub order_by: Vec<SortKey>,
    pub limit: Option<u64>,
}

impl BoundQuery {
    pub fn output_schema(&self) -> Schema {
        let source: Schema = match &self.aggregate {
            Some(agg) => agg
                .group_by
                .iter()
                .map(|&g| self.combined[g].clone())
                .chain(agg.aggs.iter().map(|a| Field {
                    name: a.name.clone(),
                    qualifier: None,
                    dtype: a.output_type(),
                }))
                .collect(),
            None => self.combined.clone(),
        };
        self.output
            .iter()
            .zip(&self.output_names)
            .map(|(&i, name)| Field {
                name: name.clone(),
                qualifier: source[i].qualifier.clone(),
                dtype: source[i].dtype,
            })
            .collect()
    }

    /// Whether the final result is ordered (explicitly, or implicitly
    /// because of a LIMIT).
    pub fn is_ordered(&self) -> bool {
        !self.order_by.is_empty() || self.limit.is_some()
    }
}

/// A validated query: its meaning plus the operator tree that computes it.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryPlan {
    pub bound: BoundQuery,
    pub root: LogicalPlan,
}

impl QueryPlan {
    pub fn database(&self) -> &str {
        &self.bound.database
    }

    pub fn scanned_tables(&self) -> Vec<String> {
        self.bound.tables.iter().map(|t| t.name.clone()).collect()
    }
}

/// Parses, binds and plans `sql` against one database of the catalog.
pub fn plan_query(sql: &str, catalog: &Catalog, database: &str) -> Result<QueryPlan> {
    let ast = super::parser::parse_query(sql)?;
    let bound = bind(&ast, catalog, database)?;
    let root = build_plan(&bound);
    check_join_graph(&root)?;
    Ok(QueryPlan { bound, root })
}

struct Scope<'a> {
    tables: &'a [BoundTable],
}

impl Scope<'_> {
    fn resolve(&self, col: &ColumnRef) -> Result<usize> {
        match &col.qualifier {
            Some(q) => {
                let t = self
                    .tables
                    .iter()
                    .find(|t| &t.alias == q)
                    .ok_or_else(|| Error::Semantic(format!("unknown table or alias {q:?}")))?;
                let i = t
                    .schema
                    .iter()
                    .position(|f| f.name == col.name)
                    .ok_or_else(|| Error::Semantic(format!("unknown column {col}")))?;
                Ok(t.offset + i)
            }
            None => {
                let mut hits = self.tables.iter().filter_map(|t| {
                    t.schema
                        .iter()
                        .position(|f| f.name == col.name)
                        .map(|i| t.offset + i)
                });
                let first = hits
                    .next()
                    .ok_or_else(|| Error::Semantic(format!("unknown column {col}")))?;
                if hits.next().is_some() {
                    return Err(Error::Semantic(format!("ambiguous column {col}")));
                }
                Ok(first)
            }
        }
    }
}

fn table_schema(def: &TableDef, alias: &str) -> Schema {
    def.columns
        .iter()
        .map(|c| Field {
            name: c.name.clone(),
            qualifier: Some(alias.to_string()),
            dtype: c.dtype,
        })
        .collect()
}

/// Resolves names and checks types.
pub fn bind(query: &ast::Query, catalog: &Catalog, database: &str) -> Result<BoundQuery> {
    catalog.database(database)?;
    if query.from.len() > MAX_TABLES {
        return Err(Error::Semantic(format!(
            "at most {MAX_TABLES} tables may appear in FROM"
        )));
    }

    let mut tables: Vec<BoundTable> = Vec::new();
    let mut combined = Schema::new();
    for item in &query.from {
        let def = catalog.table(database, &item.table)?;
        let alias = item.alias.clone().unwrap_or_else(|| item.table.clone());
        if tables.iter().any(|t| t.alias == alias) {
            return Err(Error::Semantic(format!("duplicate table alias {alias:?}")));
        }
        let schema = table_schema(def, &alias);
        combined.extend(schema.iter().cloned());
        tables.push(BoundTable {
            name: def.name.clone(),
            alias,
            offset: combined.len() - schema.len(),
            schema,
        });
    }
    let scope = Scope { tables: &tables };

    let mut conditions = Vec::new();
    for item in &query.from {
        if let Some(on) = &item.join_on {
            conditions.push(bind_predicate(on, &scope, &combined)?);
        }
    }
    if let Some(w) = &query.selection {
        conditions.push(bind_predicate(w, &scope, &combined)?);
    }
    let predicate = Expr::conjoin(conditions.into_iter().flat_map(Expr::conjuncts).collect());

    let has_agg_select = query.select.iter().any(|s| {
        matches!(
            s,
            SelectItem::Item {
                expr: SelectExpr::Aggregate(_),
                ..
            }
        )
    });
    let has_agg_order = query
        .order_by
        .iter()
        .any(|o| matches!(o.target, OrderTarget::Aggregate(_)));
    let aggregating = has_agg_select || has_agg_order || !query.group_by.is_empty();

    let mut output = Vec::new();
    let mut output_names = Vec::new();
    // Select items as written, for ORDER BY resolution: (source, output index).
    let mut select_sources: Vec<SelectSource> = Vec::new();
    let aggregate = if aggregating {
        let mut group_by: Vec<usize> = Vec::new();
        for g in &query.group_by {
            let i = scope.resolve(g)?;
            if !group_by.contains(&i) {
                group_by.push(i);
            }
        }
        let mut aggs: Vec<AggExpr> = Vec::new();
        for item in &query.select {
            match item {
                SelectItem::Wildcard => {
                    return Err(Error::Semantic("SELECT * cannot be combined with aggregation".into()))
                }
                SelectItem::Item {
                    expr: SelectExpr::Column(c),
                    alias,
                } => {
                    let i = scope.resolve(c)?;
                    let g = group_by.iter().position(|&x| x == i).ok_or_else(|| {
                        Error::Semantic(format!(
                            "column {c} must appear in GROUP BY or be used in an aggregate"
                        ))
                    })?;
                    output.push(g);
                    output_names.push(alias.clone().unwrap_or_else(|| c.name.clone()));
                    select_sources.push(SelectSource::Column(i));
                }
                SelectItem::Item {
                    expr: SelectExpr::Aggregate(call),
                    alias,
                } => {
                    let agg = bind_agg(call, &scope, &combined)?;
                    let pos = match aggs.iter().position(|a| same_agg(a, &agg)) {
                        Some(p) => p,
                        None => {
                            aggs.push(agg.clone());
                            aggs.len() - 1
                        }
                    };
                    output.push(group_by.len() + pos);
                    output_names.push(alias.clone().unwrap_or_else(|| agg.name.clone()));
                    select_sources.push(SelectSource::Agg(agg.func, agg.arg));
                }
            }
        }
        Some(BoundAggregate { group_by, aggs })
    } else {
        for item in &query.select {
            match item {
                SelectItem::Wildcard => {
                    for (i, f) in combined.iter().enumerate() {
                        output.push(i);
                        output_names.push(f.name.clone());
                        select_sources.push(SelectSource::Column(i));
                    }
                }
                SelectItem::Item {
                    expr: SelectExpr::Column(c),
                    alias,
                } => {
                    let i = scope.resolve(c)?;
                    output.push(i);
                    output_names.push(alias.clone().unwrap_or_else(|| c.name.clone()));
                    select_sources.push(SelectSource::Column(i));
                }
                SelectItem::Item {
                    expr: SelectExpr::Aggregate(_),
                    ..
                } => unreachable!("aggregating is true when any aggregate is selected"),
            }
        }
        None
    };

    let mut order_by = Vec::new();
    for item in &query.order_by {
        let column = match &item.target {
            OrderTarget::Ordinal(n) => {
                if *n == 0 || *n as usize > output.len() {
                    return Err(Error::Semantic(format!(
                        "ORDER BY position {n} is not in the select list (1..={})",
                        output.len()
                    )));
                }
                *n as usize - 1
            }
            OrderTarget::Column(c) => {
                resolve_order_column(c, &scope, &output_names, &select_sources)?
            }
            OrderTarget::Aggregate(call) => {
                let agg = bind_agg(call, &scope, &combined)?;
                select_sources
                    .iter()
                    .position(|s| *s == SelectSource::Agg(agg.func, agg.arg))
                    .ok_or_else(|| {
                        Error::Semantic(format!("ORDER BY {} must appear in the select list", agg.name))
                    })?
            }
        };
        order_by.push(SortKey {
            column,
            desc: item.desc,
        });
    }

    Ok(BoundQuery {
        database: database.to_string(),
        tables,
        combined,
        predicate,
        aggregate,
        output,
        output_names,
        order_by,
        limit: query.limit,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SelectSource {
    Column(usize),
    Agg(AggFunc, Option<usize>),
}

fn same_agg(a: &AggExpr, b: &AggExpr) -> bool {
    a.func == b.func && a.arg == b.arg
}

fn resolve_order_column(
    c: &ColumnRef,
    scope: &Scope<'_>,
    output_names: &[String],
    sources: &[SelectSource],
) -> Result<usize> {
    if c.qualifier.is_none() {
        let mut by_name = output_names.iter().enumerate().filter(|(_, n)| **n == c.name);
        if let Some((i, _)) = by_name.next() {
            // Several output columns may share a name when they are the same
            // source column; only a genuinely different second match is ambiguous.
            if by_name.any(|(j, _)| sources[j] != sources[i]) {
                return Err(Error::Semantic(format!("ORDER BY {c} is ambiguous")));
            }
            return Ok(i);
        }
    }
    let src = scope.resolve(c)?;
    sources
        .iter()
        .position(|s| *s == SelectSource::Column(src))
        .ok_or_else(|| Error::Semantic(format!("ORDER BY {c} must appear in the select list")))
}

fn bind_agg(call: &ast::AggCall, scope: &Scope<'_>, combined: &Schema) -> Result<AggExpr> {
    match &call.arg {
        None => Ok(AggExpr {
            func: AggFunc::Count,
            arg: None,
            input_type: DataType::Int64,
            name: "COUNT(*)".into(),
        }),
        Some(c) => {
            let i = scope.resolve(c)?;
            let dtype = combined[i].dtype;
            if matches!(call.func, AggFunc::Sum | AggFunc::Avg) && !dtype.is_numeric() {
                return Err(Error::Semantic(format!(
                    "{}({c}) needs a numeric column, {c} is {dtype}",
                    call.func.name()
                )));
            }
            Ok(AggExpr {
                func: call.func,
                arg: Some(i),
                input_type: dtype,
                name: format!("{}({})", call.func.name(), c),
            })
        }
    }
}

enum Typed {
    Expr(Expr, DataType),
    /// A string literal whose type is decided by what it is compared with.
    StrLit(String),
}

fn bind_predicate(e: &AstExpr, scope: &Scope<'_>, combined: &Schema) -> Result<Expr> {
    match bind_expr(e, scope, combined)? {
        Typed::Expr(expr, DataType::Bool) => Ok(expr),
        Typed::Expr(_, t) => Err(Error::Semantic(format!(
            "predicate must be boolean, found {t}"
        ))),
        Typed::StrLit(_) => Err(Error::Semantic("predicate must be boolean, found string".into())),
    }
}

fn bind_expr(e: &AstExpr, scope: &Scope<'_>, combined: &Schema) -> Result<Typed> {
    Ok(match e {
        AstExpr::Column(c) => {
            let i = scope.resolve(c)?;
            Typed::Expr(Expr::Column(i), combined[i].dtype)
        }
        AstExpr::Literal(lit) => match lit {
            Literal::Int(v) => Typed::Expr(Expr::Literal(Value::Int(*v)), DataType::Int64),
            Literal::Float(v) => Typed::Expr(Expr::Literal(Value::Float(*v)), DataType::Float64),
            Literal::Bool(v) => Typed::Expr(Expr::Literal(Value::Bool(*v)), DataType::Bool),
            Literal::Str(s) => Typed::StrLit(s.clone()),
            Literal::Date(s) => {
                let d = parse_date(s)
                    .ok_or_else(|| Error::Semantic(format!("invalid date literal {s:?}")))?;
                Typed::Expr(Expr::Literal(Value::Date(d)), DataType::Date)
            }
        },
        AstExpr::Compare { op, left, right } => {
            let l = bind_expr(left, scope, combined)?;
            let r = bind_expr(right, scope, combined)?;
            let (l, r) = unify(l, r, *op)?;
            Typed::Expr(
                Expr::Compare {
                    op: *op,
                    left: Box::new(l),
                    right: Box::new(r),
                },
                DataType::Bool,
            )
        }
        AstExpr::And(a, b) => Typed::Expr(
            Expr::And(
                Box::new(bind_predicate(a, scope, combined)?),
                Box::new(bind_predicate(b, scope, combined)?),
            ),
            DataType::Bool,
        ),
        AstExpr::Or(a, b) => Typed::Expr(
            Expr::Or(
                Box::new(bind_predicate(a, scope, combined)?),
                Box::new(bind_predicate(b, scope, combined)?),
            ),
            DataType::Bool,
        ),
        AstExpr::Not(a) => Typed::Expr(
            Expr::Not(Box::new(bind_predicate(a, scope, combined)?)),
            DataType::Bool,
        ),
    })
}

fn string_literal_as(s: &str, dtype: DataType) -> Result<Expr> {
    match dtype {
        DataType::String => Ok(Expr::Literal(Value::Str(s.to_string()))),
        DataType::Date => parse_date(s)
            .map(|d| Expr::Literal(Value::Date(d)))
            .ok_or_else(|| Error::Semantic(format!("{s:?} is not a valid date"))),
        other => Err(Error::Semantic(format!(
            "type mismatch: cannot compare string literal with {other}"
        ))),
    }
}

fn unify(l: Typed, r: Typed, op: CmpOp) -> Result<(Expr, Expr)> {
    let check_operand = |e: &Expr| match e {
        Expr::Column(_) | Expr::Literal(_) => Ok(()),
        _ => Err(Error::Semantic(format!(
            "operands of {} must be columns or literals",
            op.symbol()
        ))),
    };
    let (l, r) = match (l, r) {
        (Typed::Expr(le, lt), Typed::Expr(re, rt)) => {
            if !lt.comparable_with(rt) {
                return Err(Error::Semantic(format!(
                    "type mismatch: cannot compare {lt} with {rt}"
                )));
            }
            (le, re)
        }
        (Typed::Expr(le, lt), Typed::StrLit(s)) => (le, string_literal_as(&s, lt)?),
        (Typed::StrLit(s), Typed::Expr(re, rt)) => (string_literal_as(&s, rt)?, re),
        (Typed::StrLit(a), Typed::StrLit(b)) => {
            (Expr::Literal(Value::Str(a)), Expr::Literal(Value::Str(b)))
        }
    };
    check_operand(&l)?;
    check_operand(&r)?;
    Ok((l, r))
}

/// Builds the operator tree for a bound query: per-table filters over scans,
/// a left-deep chain of hash joins in FROM order, residual filter, then
/// aggregate or projection, sort and limit.
pub fn build_plan(q: &BoundQuery) -> LogicalPlan {
    let table_of = |col: usize| {
        q.tables
            .iter()
            .rposition(|t| t.offset <= col)
            .expect("every column belongs to a table")
    };

    let mut per_table: Vec<Vec<Expr>> = vec![Vec::new(); q.tables.len()];
    // (left table, left col, right table, right col), with left table < right table.
    let mut join_keys: Vec<(usize, usize, usize, usize)> = Vec::new();
    let mut residual: Vec<Expr> = Vec::new();

    for c in q.predicate.clone().map(Expr::conjuncts).unwrap_or_default() {
        let mut cols = BTreeSet::new();
        c.columns(&mut cols);
        let touched: BTreeSet<usize> = cols.iter().map(|&i| table_of(i)).collect();
        match touched.len() {
            0 => per_table[0].push(c),
            1 => {
                let t = *touched.iter().next().expect("one table");
                let off = q.tables[t].offset;
                per_table[t].push(c.remap(&|i| i - off));
            }
            _ => match &c {
                Expr::Compare {
                    op: CmpOp::Eq,
                    left,
                    right,
                } => match (left.as_ref(), right.as_ref()) {
                    (Expr::Column(a), Expr::Column(b))
                        if table_of(*a) != table_of(*b)
                            && q.combined[*a].dtype == q.combined[*b].dtype =>
                    {
                        let (a, b) = if table_of(*a) < table_of(*b) { (*a, *b) } else { (*b, *a) };
                        join_keys.push((table_of(a), a, table_of(b), b));
                    }
                    _ => residual.push(c),
                },
                _ => residual.push(c),
            },
        }
    }

    let scan = |t: usize, filters: &mut Vec<Vec<Expr>>| {
        let bt = &q.tables[t];
        let node = LogicalPlan::Scan {
            table: bt.name.clone(),
            alias: bt.alias.clone(),
            schema: bt.schema.clone(),
            range: None,
        };
        match Expr::conjoin(std::mem::take(&mut filters[t])) {
            Some(predicate) => LogicalPlan::Filter {
                input: Box::new(node),
                predicate,
            },
            None => node,
        }
    };

    let mut acc = scan(0, &mut per_table);
    for t in 1..q.tables.len() {
        let off = q.tables[t].offset;
        let keys: Vec<(usize, usize)> = join_keys
            .iter()
            .filter(|(_, _, rt, _)| *rt == t)
            .map(|&(_, a, _, b)| (a, b - off))
            .collect();
        let right = scan(t, &mut per_table);
        acc = LogicalPlan::HashJoin {
            left: Box::new(acc),
            right: Box::new(right),
            keys,
        };
    }
    if let Some(predicate) = Expr::conjoin(residual) {
        acc = LogicalPlan::Filter {
            input: Box::new(acc),
            predicate,
        };
    }

    let (body, source_schema) = match &q.aggregate {
        Some(agg) => {
            let node = LogicalPlan::Aggregate {
                input: Box::new(acc),
                group_by: agg.group_by.clone(),
                aggs: agg.aggs.clone(),
                mode: AggMode::Full,
            };
            let s = node.schema();
            (node, s)
        }
        None => (acc, q.combined.clone()),
    };
    let identity = q.output.len() == source_schema.len()
        && q.output.iter().enumerate().all(|(i, &c)| i == c)
        && q.output_names.iter().zip(&source_schema).all(|(n, f)| *n == f.name);
    let mut root = if identity {
        body
    } else {
        LogicalPlan::Project {
            input: Box::new(body),
            columns: q.output.clone(),
            names: q.output_names.clone(),
        }
    };
    if q.is_ordered() {
        root = LogicalPlan::Sort {
            input: Box::new(root),
            keys: q.order_by.clone(),
        };
    }
    if let Some(n) = q.limit {
        root = LogicalPlan::Limit {
            input: Box::new(root),
            n,
        };
    }
    root
}

/// Checks that every table after the first is connected to an earlier one
/// by at least one column equality; cross joins are not supported.
pub fn check_join_graph(plan: &LogicalPlan) -> Result<()> {
    match plan {
        LogicalPlan::HashJoin { left, right, keys } => {
            if keys.is_empty() {
                let name = right
                    .scans()
                    .first()
                    .and_then(|s| match s {
                        LogicalPlan::Scan { alias, .. } => Some(alias.clone()),
                        _ => None,
                    })
                    .unwrap_or_default();
                return Err(Error::Semantic(format!(
                    "table {name:?} is not joined to the preceding tables by a column equality"
                )));
            }
            check_join_graph(left)?;
            check_join_graph(right)
        }
        other => other.children().into_iter().try_for_each(check_join_graph),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil;

    const T: &[(&str, &str)] = &[("c", "int64"), ("x", "int64")];
    const U: &[(&str, &str)] = &[("c", "int64"), ("s", "string"), ("d", "date")];

    fn cat() -> (tempfile::TempDir, std::sync::Arc<Catalog>) {
        testutil::catalog(&[("t", T, &testutil::numbers(10)), ("u", U, "1,a,2020-01-01\n")])
    }

    fn shape(sql: &str) -> String {
        let (_d, c) = cat();
        plan_query(sql, &c, "db").unwrap().root.shape()
    }

    fn semantic(sql: &str) -> String {
        let (_d, c) = cat();
        match plan_query(sql, &c, "db") {
            Err(Error::Semantic(m)) => m,
            other => panic!("expected a semantic error for {sql}, got {other:?}"),
        }
    }

    #[test]
    fn minimal_and_grouped_shapes() {
        assert_eq!(shape("SELECT x FROM t"), "Project(x)→Scan(t)");
        assert_eq!(
            shape("SELECT c, COUNT(*) FROM t GROUP BY c ORDER BY 2 DESC LIMIT 3"),
            "Limit(3)→Sort→Aggregate→Scan(t)"
        );
        assert_eq!(shape("SELECT * FROM t"), "Scan(t)");
    }

    #[test]
    fn single_table_conjuncts_sink_into_scans() {
        assert_eq!(
            shape("SELECT t.x FROM t JOIN u ON t.c = u.c WHERE t.x > 3 AND u.s = 'a' AND (t.x = 1 OR u.s = 'b')"),
            "Project(x)→Filter→HashJoin(Filter→Scan(t),Filter→Scan(u))"
        );
    }

    #[test]
    fn limit_without_order_sorts_implicitly() {
        assert_eq!(shape("SELECT x FROM t LIMIT 2"), "Limit(2)→Sort→Project(x)→Scan(t)");
    }

    #[test]
    fn name_resolution_errors() {
        let (_d, c) = cat();
        assert!(matches!(plan_query("SELECT x FROM nope", &c, "db"), Err(Error::NotFound(_))));
        assert!(semantic("SELECT y FROM t").contains("unknown column y"));
        assert!(semantic("SELECT c FROM t JOIN u ON t.c = u.c").contains("ambiguous"));
        assert!(semantic("SELECT z.x FROM t").contains("unknown table or alias"));
    }

    #[test]
    fn type_and_grouping_errors() {
        semantic("SELECT x FROM t WHERE x = 'a'");
        semantic("SELECT s FROM u WHERE d = 'not a date'");
        semantic("SELECT x, COUNT(*) FROM t");
        semantic("SELECT x FROM t GROUP BY c");
        semantic("SELECT SUM(s) FROM u");
        semantic("SELECT x FROM t ORDER BY 3");
    }

    #[test]
    fn cross_join_is_rejected() {
        assert!(semantic("SELECT t.x FROM t, u").contains("not joined"));
    }

    #[test]
    fn identifiers_are_case_sensitive() {
        semantic("SELECT X FROM t");
        shape("select x from t where x > 1");
    }
}
