//! Small on-disk catalogs for unit tests.

use std::sync::Arc;

use serde_json::json;
use tempfile::TempDir;

use crate::catalog::Catalog;

/// `(table, [(column, dtype)], csv rows without header)`.
pub type TableSpec<'a> = (&'a str, &'a [(&'a str, &'a str)], &'a str);

/// Writes the tables as database `db` and loads the catalog. Keep the
/// directory alive for as long as the catalog is used.
pub fn catalog(tables: &[TableSpec<'_>]) -> (TempDir, Arc<Catalog>) {
    let dir = tempfile::tempdir().unwrap();
    let mut defs = Vec::new();
    for (name, cols, body) in tables {
        let header: Vec<&str> = cols.iter().map(|c| c.0).collect();
        let mut text = header.join(",");
        text.push('\n');
        text.push_str(body);
        std::fs::write(dir.path().join(format!("{name}.csv")), text).unwrap();
        defs.push(json!({
            "name": name,
            "columns": cols.iter().map(|(c, t)| json!({"name": c, "dtype": t})).collect::<Vec<_>>(),
            "files": [format!("{name}.csv")],
        }));
    }
    let manifest = dir.path().join("manifest.json");
    std::fs::write(&manifest, json!({"databases": [{"name": "db", "tables": defs}]}).to_string()).unwrap();
    let cat = Catalog::load_manifest(&manifest).unwrap();
    (dir, Arc::new(cat))
}

/// `n` rows of table `t(c int64, x int64)` with `c = i % 3`, `x = i`.
pub fn numbers(n: usize) -> String {
    (0..n).map(|i| format!("{},{i}\n", i % 3)).collect()
}
