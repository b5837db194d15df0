#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use turbodb_core::catalog::Catalog;
use turbodb_core::sim::{generate, FixtureSize, Scenario};

pub const FIXTURE_SEED: u64 = 42;

/// The bundled fixture, generated once per test binary.
pub fn fixture() -> Arc<Catalog> {
    static CATALOG: OnceLock<Arc<Catalog>> = OnceLock::new();
    CATALOG
        .get_or_init(|| {
            let dir = tempfile::tempdir().unwrap().keep();
            let manifest = generate(&dir, FixtureSize::default(), FIXTURE_SEED).unwrap();
            Arc::new(Catalog::load_manifest(&manifest).unwrap())
        })
        .clone()
}

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.json"))
}

pub fn w1() -> Scenario {
    Scenario::load(&scenario_path("w1")).unwrap()
}

/// Database `db` with one table `t(c int64, x int64)` holding `body`.
pub fn small_catalog(body: &str) -> (tempfile::TempDir, Arc<Catalog>) {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("t.csv"), format!("c,x\n{body}")).unwrap();
    let manifest = dir.path().join("manifest.json");
    let text = serde_json::json!({"databases": [{"name": "db", "tables": [{
        "name": "t",
        "columns": [{"name": "c", "dtype": "int64"}, {"name": "x", "dtype": "int64"}],
        "files": ["t.csv"],
    }]}]});
    std::fs::write(&manifest, text.to_string()).unwrap();
    let catalog = Arc::new(Catalog::load_manifest(&manifest).unwrap());
    (dir, catalog)
}

/// `n` rows with `c = i % 3` and `x = i`.
pub fn numbers(n: usize) -> String {
    (0..n).map(|i| format!("{},{i}\n", i % 3)).collect()
}

pub mod querygen;
pub mod equiv;
