//! Deterministic synthetic dataset shaped after the TPC-H schema.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::value::format_date;

const REGIONS: [&str; 5] = ["AFRICA", "AMERICA", "ASIA", "EUROPE", "MIDDLE EAST"];

const NATIONS: [(&str, usize); 25] = [
    ("ALGERIA", 0),
    ("ARGENTINA", 1),
    ("BRAZIL", 1),
    ("CANADA", 1),
    ("EGYPT", 4),
    ("ETHIOPIA", 0),
    ("FRANCE", 3),
    ("GERMANY", 3),
    ("INDIA", 2),
    ("INDONESIA", 2),
    ("IRAN", 4),
    ("IRAQ", 4),
    ("JAPAN", 2),
    ("JORDAN", 4),
    ("KENYA", 0),
    ("MOROCCO", 0),
    ("MOZAMBIQUE", 0),
    ("PERU", 1),
    ("CHINA", 2),
    ("ROMANIA", 3),
    ("SAUDI ARABIA", 4),
    ("VIETNAM", 2),
    ("RUSSIA", 3),
    ("UNITED KINGDOM", 3),
    ("UNITED STATES", 1),
];

const SEGMENTS: [&str; 5] = ["AUTOMOBILE", "BUILDING", "FURNITURE", "HOUSEHOLD", "MACHINERY"];
const PRIORITIES: [&str; 5] = ["1-URGENT", "2-HIGH", "3-MEDIUM", "4-NOT SPECIFIED", "5-LOW"];
const SHIP_MODES: [&str; 7] = ["AIR", "FOB", "MAIL", "RAIL", "REG AIR", "SHIP", "TRUCK"];
const RETURN_FLAGS: [&str; 3] = ["A", "N", "R"];
const STATUSES: [&str; 3] = ["F", "O", "P"];

/// Table sizes of a generated dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixtureSize {
    pub customers: usize,
    pub orders: usize,
    /// Average line items per order is four.
    pub lineitems: usize,
}

impl Default for FixtureSize {
    fn default() -> Self {
        FixtureSize {
            customers: 1_500,
            orders: 7_500,
            lineitems: 30_000,
        }
    }
}

fn cents(rng: &mut SplitMix64, lo: i64, hi: i64) -> String {
    let c = rng.range_i64(lo * 100, hi * 100);
    let sign = if c < 0 { "-" } else { "" };
    format!("{sign}{}.{:02}", c.abs() / 100, c.abs() % 100)
}

fn write(dir: &Path, name: &str, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let path = dir.join(format!("{name}.csv"));
    let fail = |e: &dyn std::fmt::Display| Error::Execution(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(&path).map_err(|e| fail(&e))?;
    w.write_record(header).map_err(|e| fail(&e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| fail(&e))?;
    }
    w.flush().map_err(|e| fail(&e))
}

/// Writes the dataset's CSV files and a `manifest.json` for database
/// `tpch` into `dir`, returning the manifest path.
pub fn generate(dir: &Path, size: FixtureSize, seed: u64) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut rng = SplitMix64::stream(seed, 0xF1);
    let epoch_1992 = crate::value::parse_date("1992-01-01").expect("valid date");
    let days = 7 * 365;

    write(
        dir,
        "region",
        &["r_regionkey", "r_name"],
        REGIONS
            .iter()
            .enumerate()
            .map(|(i, n)| vec![i.to_string(), n.to_string()]),
    )?;

    let nation_rows: Vec<Vec<String>> = NATIONS
        .iter()
        .enumerate()
        .map(|(i, (name, region))| {
            vec![
                i.to_string(),
                name.to_string(),
                region.to_string(),
                REGIONS[*region].to_string(),
                rng.range_i64(1_000_000, 300_000_000).to_string(),
            ]
        })
        .collect();
    write(
        dir,
        "nation",
        &["n_id", "n_name", "n_regionkey", "n_region", "n_pop"],
        nation_rows.into_iter(),
    )?;

    let customers: Vec<Vec<String>> = (1..=size.customers)
        .map(|k| {
            vec![
                k.to_string(),
                format!("Customer#{k:09}"),
                rng.below(25).to_string(),
                cents(&mut rng, -999, 9999),
                SEGMENTS[rng.below(SEGMENTS.len())].to_string(),
            ]
        })
        .collect();
    write(
        dir,
        "customer",
        &["c_custkey", "c_name", "c_nationkey", "c_acctbal", "c_mktsegment"],
        customers.into_iter(),
    )?;

    let mut order_dates = Vec::with_capacity(size.orders);
    let orders: Vec<Vec<String>> = (1..=size.orders)
        .map(|k| {
            let date = epoch_1992 + rng.range_i64(0, days - 151) as i32;
            order_dates.push(date);
            vec![
                k.to_string(),
                (1 + rng.below(size.customers.max(1))).to_string(),
                STATUSES[rng.below(STATUSES.len())].to_string(),
                cents(&mut rng, 850, 500_000),
                format_date(date),
                PRIORITIES[rng.below(PRIORITIES.len())].to_string(),
            ]
        })
        .collect();
    write(
        dir,
        "orders",
        &["o_orderkey", "o_custkey", "o_orderstatus", "o_totalprice", "o_orderdate", "o_orderpriority"],
        orders.into_iter(),
    )?;

    let mut lines = Vec::with_capacity(size.lineitems);
    let per_order = size.lineitems.div_ceil(size.orders.max(1)).max(1);
    'outer: for o in 0..size.orders.max(1) {
        for ln in 1..=per_order {
            if lines.len() == size.lineitems {
                break 'outer;
            }
            let ship = order_dates.get(o).copied().unwrap_or(epoch_1992) + rng.range_i64(1, 121) as i32;
            lines.push(vec![
                (o + 1).to_string(),
                ln.to_string(),
                (1 + rng.below(20_000)).to_string(),
                rng.range_i64(1, 50).to_string(),
                cents(&mut rng, 900, 100_000),
                format!("0.{:02}", rng.below(11)),
                RETURN_FLAGS[rng.below(RETURN_FLAGS.len())].to_string(),
                format_date(ship),
                SHIP_MODES[rng.below(SHIP_MODES.len())].to_string(),
            ]);
        }
    }
    write(
        dir,
        "lineitem",
        &[
            "l_orderkey",
            "l_linenumber",
            "l_partkey",
            "l_quantity",
            "l_extendedprice",
            "l_discount",
            "l_returnflag",
            "l_shipdate",
            "l_shipmode",
        ],
        lines.into_iter(),
    )?;

    let col = |n: &str, t: &str| json!({"name": n, "dtype": t});
    let manifest = json!({
        "databases": [{
            "name": "tpch",
            "tables": [
                {"name": "region", "columns": [col("r_regionkey", "int64"), col("r_name", "string")], "files": ["region.csv"]},
                {"name": "nation", "columns": [col("n_id", "int64"), col("n_name", "string"), col("n_regionkey", "int64"), col("n_region", "string"), col("n_pop", "int64")], "files": ["nation.csv"]},
                {"name": "customer", "columns": [col("c_custkey", "int64"), col("c_name", "string"), col("c_nationkey", "int64"), col("c_acctbal", "float64"), col("c_mktsegment", "string")], "files": ["customer.csv"]},
                {"name": "orders", "columns": [col("o_orderkey", "int64"), col("o_custkey", "int64"), col("o_orderstatus", "string"), col("o_totalprice", "float64"), col("o_orderdate", "date"), col("o_orderpriority", "string")], "files": ["orders.csv"]},
                {"name": "lineitem", "columns": [col("l_orderkey", "int64"), col("l_linenumber", "int64"), col("l_partkey", "int64"), col("l_quantity", "int64"), col("l_extendedprice", "float64"), col("l_discount", "float64"), col("l_returnflag", "string"), col("l_shipdate", "date"), col("l_shipmode", "string")], "files": ["lineitem.csv"]}
            ]
        }]
    });
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_vec_pretty(&manifest)?)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Catalog;

    #[test]
    fn generation_is_deterministic_and_loadable() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let size = FixtureSize {
            customers: 50,
            orders: 100,
            lineitems: 350,
        };
        let ma = generate(a.path(), size, 7).unwrap();
        let mb = generate(b.path(), size, 7).unwrap();
        for t in ["region", "nation", "customer", "orders", "lineitem"] {
            let fa = fs::read(a.path().join(format!("{t}.csv"))).unwrap();
            let fb = fs::read(b.path().join(format!("{t}.csv"))).unwrap();
            assert_eq!(fa, fb, "{t}");
        }
        let cat = Catalog::load_manifest(&ma).unwrap();
        Catalog::load_manifest(&mb).unwrap();
        assert_eq!(cat.table("tpch", "lineitem").unwrap().row_count, 350);
        assert_eq!(cat.table("tpch", "nation").unwrap().row_count, 25);
    }
}
