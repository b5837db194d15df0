//! Random tables and random queries in the supported SQL subset.

use std::path::Path;
use std::sync::Arc;

use serde_json::json;
use turbodb_core::catalog::Catalog;
use turbodb_core::rng::SplitMix64;
use turbodb_core::value::format_date;

pub const DB: &str = "gen";

#[derive(Clone, Copy, PartialEq)]
enum Ty {
    Int,
    Float,
    Str,
    Date,
    Bool,
}

struct Col {
    table: &'static str,
    name: &'static str,
    ty: Ty,
}

const COLS: &[Col] = &[
    Col { table: "f", name: "f_k", ty: Ty::Int },
    Col { table: "f", name: "f_a", ty: Ty::Int },
    Col { table: "f", name: "f_x", ty: Ty::Float },
    Col { table: "f", name: "f_s", ty: Ty::Str },
    Col { table: "f", name: "f_d", ty: Ty::Date },
    Col { table: "f", name: "f_b", ty: Ty::Bool },
    Col { table: "g", name: "g_id", ty: Ty::Int },
    Col { table: "g", name: "g_v", ty: Ty::Int },
    Col { table: "g", name: "g_x", ty: Ty::Float },
    Col { table: "g", name: "g_s", ty: Ty::Str },
    Col { table: "g", name: "g_d", ty: Ty::Date },
    Col { table: "h", name: "h_id", ty: Ty::Int },
    Col { table: "h", name: "h_s", ty: Ty::Str },
    Col { table: "h", name: "h_a", ty: Ty::Int },
];

/// Equality join edges between tables.
const EDGES: &[(&str, &str, &str, &str)] = &[
    ("f", "f_k", "g", "g_id"),
    ("f", "f_d", "g", "g_d"),
    ("g", "g_id", "h", "h_id"),
    ("f", "f_s", "h", "h_s"),
    ("f", "f_a", "h", "h_a"),
];

const WORDS: [&str; 5] = ["red", "green", "blue", "amber", "teal"];
const BASE_DAY: i32 = 18_262; // 2020-01-01

fn dtype(ty: Ty) -> &'static str {
    match ty {
        Ty::Int => "int64",
        Ty::Float => "float64",
        Ty::Str => "string",
        Ty::Date => "date",
        Ty::Bool => "bool",
    }
}

fn quarter(rng: &mut SplitMix64, lo: i64, hi: i64) -> String {
    let q = rng.range_i64(lo * 4, hi * 4);
    let v = q as f64 / 4.0;
    format!("{v}")
}

fn value(rng: &mut SplitMix64, c: &Col) -> String {
    match (c.ty, c.name) {
        (Ty::Int, "f_k" | "g_id") => rng.range_i64(0, 40).to_string(),
        (Ty::Int, "h_id") => rng.range_i64(0, 12).to_string(),
        (Ty::Int, _) => rng.range_i64(-50, 50).to_string(),
        (Ty::Float, _) => quarter(rng, -100, 100),
        (Ty::Str, _) => WORDS[rng.below(WORDS.len())].to_string(),
        (Ty::Date, _) => format_date(BASE_DAY + rng.range_i64(0, 60) as i32),
        (Ty::Bool, _) => (rng.below(2) == 0).to_string(),
    }
}

fn row_count(rng: &mut SplitMix64, max: usize) -> usize {
    match rng.below(6) {
        0 => 0,
        1 => rng.below(3),
        2 => max,
        _ => rng.below(max + 1),
    }
}

/// Writes random tables `f` (≤ 10^4 rows), `g` (≤ 300) and `h` (≤ 30) into
/// `dir` and loads them as database `gen`.
pub fn world(dir: &Path, seed: u64) -> Arc<Catalog> {
    let mut rng = SplitMix64::new(seed);
    let mut tables = Vec::new();
    for (t, max) in [("f", 10_000), ("g", 300), ("h", 30)] {
        let cols: Vec<&Col> = COLS.iter().filter(|c| c.table == t).collect();
        let n = row_count(&mut rng, max);
        let mut w = csv::Writer::from_path(dir.join(format!("{t}.csv"))).unwrap();
        w.write_record(cols.iter().map(|c| c.name)).unwrap();
        for _ in 0..n {
            let rec: Vec<String> = cols.iter().map(|c| value(&mut rng, c)).collect();
            w.write_record(&rec).unwrap();
        }
        w.flush().unwrap();
        tables.push(json!({
            "name": t,
            "columns": cols.iter().map(|c| json!({"name": c.name, "dtype": dtype(c.ty)})).collect::<Vec<_>>(),
            "files": [format!("{t}.csv")],
        }));
    }
    let manifest = dir.join("manifest.json");
    std::fs::write(&manifest, json!({"databases": [{"name": DB, "tables": tables}]}).to_string()).unwrap();
    Arc::new(Catalog::load_manifest(&manifest).unwrap())
}

fn literal(rng: &mut SplitMix64, ty: Ty) -> String {
    match ty {
        Ty::Int => rng.range_i64(-60, 60).to_string(),
        Ty::Float => {
            let v = quarter(rng, -110, 110);
            if v.contains('.') {
                v
            } else {
                format!("{v}.0")
            }
        }
        Ty::Str => format!("'{}'", WORDS[rng.below(WORDS.len())]),
        Ty::Date => {
            let d = format_date(BASE_DAY + rng.range_i64(-5, 65) as i32);
            if rng.below(2) == 0 {
                format!("DATE '{d}'")
            } else {
                format!("'{d}'")
            }
        }
        Ty::Bool => if rng.below(2) == 0 { "TRUE" } else { "FALSE" }.to_string(),
    }
}

fn pick<'a, T>(rng: &mut SplitMix64, xs: &'a [T]) -> &'a T {
    &xs[rng.below(xs.len())]
}

struct Gen<'a> {
    rng: &'a mut SplitMix64,
    cols: Vec<&'static Col>,
    qualify: bool,
    alias: Vec<(&'static str, String)>,
}

impl Gen<'_> {
    fn col_name(&self, c: &Col) -> String {
        if self.qualify {
            let a = &self.alias.iter().find(|(t, _)| *t == c.table).unwrap().1;
            format!("{a}.{}", c.name)
        } else {
            c.name.to_string()
        }
    }

    fn comparison(&mut self) -> String {
        let c = *pick(self.rng, &self.cols);
        let op = *pick(self.rng, &["=", "<>", "<", "<=", ">", ">=", "!="]);
        let numeric = matches!(c.ty, Ty::Int | Ty::Float);
        let same: Vec<&'static Col> = self
            .cols
            .iter()
            .copied()
            .filter(|o| o.ty == c.ty || (numeric && matches!(o.ty, Ty::Int | Ty::Float)))
            .collect();
        let rhs = if self.rng.below(4) == 0 {
            let o = *pick(self.rng, &same);
            self.col_name(o)
        } else {
            let ty = if numeric && self.rng.below(3) == 0 {
                if c.ty == Ty::Int { Ty::Float } else { Ty::Int }
            } else {
                c.ty
            };
            literal(self.rng, ty)
        };
        let lhs = self.col_name(c);
        if self.rng.below(5) == 0 {
            format!("{rhs} {op} {lhs}")
        } else {
            format!("{lhs} {op} {rhs}")
        }
    }

    fn predicate(&mut self, depth: u32) -> String {
        if depth == 0 || self.rng.below(3) == 0 {
            return self.comparison();
        }
        match self.rng.below(4) {
            0 => format!("NOT ({})", self.predicate(depth - 1)),
            1 => format!("({} OR {})", self.predicate(depth - 1), self.predicate(depth - 1)),
            _ => format!("{} AND {}", self.predicate(depth - 1), self.predicate(depth - 1)),
        }
    }
}

/// A random query over the tables of [`world`].
pub fn query(rng: &mut SplitMix64) -> String {
    let tables: Vec<&'static str> = match rng.below(10) {
        0..=5 => vec![*pick(rng, &["f", "g", "h"])],
        6..=8 => match rng.below(3) {
            0 => vec!["f", "g"],
            1 => vec!["g", "h"],
            _ => vec!["f", "h"],
        },
        _ => vec!["f", "g", "h"],
    };
    let qualify = tables.len() > 1 && rng.below(2) == 0;
    let alias: Vec<(&str, String)> = tables
        .iter()
        .map(|t| (*t, if rng.below(2) == 0 { t.to_string() } else { format!("{t}{t}") }))
        .collect();
    let cols: Vec<&'static Col> = COLS.iter().filter(|c| tables.contains(&c.table)).collect();
    let mut g = Gen {
        rng,
        cols,
        qualify,
        alias,
    };

    // Join edges forming a spanning tree.
    let mut joins = Vec::new();
    for (i, t) in tables.iter().enumerate().skip(1) {
        let options: Vec<_> = EDGES
            .iter()
            .filter(|(a, _, b, _)| (b == t && tables[..i].contains(a)) || (a == t && tables[..i].contains(b)))
            .collect();
        let &(a, ac, b, bc) = *pick(g.rng, &options);
        let (l, r) = (
            g.col_name(COLS.iter().find(|c| c.table == a && c.name == ac).unwrap()),
            g.col_name(COLS.iter().find(|c| c.table == b && c.name == bc).unwrap()),
        );
        joins.push(if g.rng.below(2) == 0 { format!("{l} = {r}") } else { format!("{r} = {l}") });
    }
    let use_on = g.rng.below(2) == 0;
    let table_ref = |g: &Gen<'_>, t: &str| {
        let a = &g.alias.iter().find(|(n, _)| *n == t).unwrap().1;
        if a == t { t.to_string() } else { format!("{t} {a}") }
    };
    let mut from = table_ref(&g, tables[0]);
    let mut conds: Vec<String> = Vec::new();
    for (i, t) in tables.iter().enumerate().skip(1) {
        if use_on {
            from.push_str(&format!(" JOIN {} ON {}", table_ref(&g, t), joins[i - 1]));
        } else {
            from.push_str(&format!(", {}", table_ref(&g, t)));
            conds.push(joins[i - 1].clone());
        }
    }
    if g.rng.below(4) != 0 {
        conds.push(g.predicate(2));
    }

    let mut select: Vec<String> = Vec::new();
    let mut group: Vec<String> = Vec::new();
    let aggregate = g.rng.below(2) == 0;
    if aggregate {
        let n_group = g.rng.below(3);
        for _ in 0..n_group {
            let c = *pick(g.rng, &g.cols);
            let name = g.col_name(c);
            if !group.contains(&name) {
                group.push(name);
            }
        }
        let mut items: Vec<String> = group.iter().filter(|_| g.rng.below(4) != 0).cloned().collect();
        for _ in 0..1 + g.rng.below(3) {
            let c = *pick(g.rng, &g.cols);
            let arg = g.col_name(c);
            let numeric = matches!(c.ty, Ty::Int | Ty::Float);
            let f = match g.rng.below(6) {
                0 => "COUNT(*)".to_string(),
                1 => format!("COUNT({arg})"),
                2 if numeric => format!("SUM({arg})"),
                3 if numeric => format!("AVG({arg})"),
                4 => format!("MIN({arg})"),
                _ => format!("MAX({arg})"),
            };
            items.insert(g.rng.below(items.len() + 1), f);
        }
        select = items;
    } else if g.rng.below(5) == 0 {
        select.push("*".into());
    } else {
        for _ in 0..1 + g.rng.below(4) {
            let c = *pick(g.rng, &g.cols);
            select.push(g.col_name(c));
        }
    }

    let mut sql = format!("SELECT {} FROM {from}", select.join(", "));
    if !conds.is_empty() {
        sql.push_str(&format!(" WHERE {}", conds.join(" AND ")));
    }
    if !group.is_empty() {
        sql.push_str(&format!(" GROUP BY {}", group.join(", ")));
    }
    if g.rng.below(2) == 0 && select[0] != "*" {
        let mut keys = Vec::new();
        for _ in 0..1 + g.rng.below(2) {
            let i = g.rng.below(select.len());
            let key = if g.rng.below(2) == 0 { (i + 1).to_string() } else { select[i].clone() };
            let dir = *pick(g.rng, &["", " ASC", " DESC"]);
            keys.push(format!("{key}{dir}"));
        }
        sql.push_str(&format!(" ORDER BY {}", keys.join(", ")));
    }
    if g.rng.below(3) == 0 {
        sql.push_str(&format!(" LIMIT {}", g.rng.below(25)));
    }
    sql
}
