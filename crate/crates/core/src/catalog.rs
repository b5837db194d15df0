//! Database schemas, data-file locations and scan statistics.
//!
//! A catalog is built once from a JSON manifest and is immutable afterwards,
//! so it can be shared freely between threads behind an `Arc`.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::value::DataType;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    pub dtype: DataType,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableDef {
    pub name: String,
    pub columns: Vec<ColumnDef>,
    pub data_files: Vec<PathBuf>,
    pub row_count: u64,
    pub byte_size: u64,
}

impl TableDef {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Database {
    pub name: String,
    pub tables: Vec<TableDef>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Catalog {
    databases: Vec<Database>,
}

/// Table and column names of one database, as handed to a translator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaElements {
    pub database: String,
    pub tables: Vec<TableSchema>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableSchema {
    pub name: String,
    pub columns: Vec<ColumnDef>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    #[serde(default)]
    databases: Vec<ManifestDatabase>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestDatabase {
    name: String,
    #[serde(default)]
    tables: Vec<ManifestTable>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestTable {
    name: String,
    columns: Vec<ColumnDef>,
    #[serde(default)]
    files: Vec<PathBuf>,
}

impl Catalog {
    /// Loads a manifest and computes row counts and byte sizes from the data
    /// files it references. Relative file paths resolve against the
    /// manifest's directory.
    pub fn load_manifest(path: &Path) -> Result<Catalog> {
        let text = fs::read_to_string(path).map_err(|e| Error::load(path, e))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::load(path, format!("bad manifest: {e}")))?;
        let base = path.parent().unwrap_or(Path::new("."));

        let mut db_names = HashSet::new();
        let mut databases = Vec::with_capacity(manifest.databases.len());
        for db in manifest.databases {
            if !db_names.insert(db.name.clone()) {
                return Err(Error::Schema(format!("duplicate database {:?}", db.name)));
            }
            let mut table_names = HashSet::new();
            let mut tables = Vec::with_capacity(db.tables.len());
            for t in db.tables {
                if !table_names.insert(t.name.clone()) {
                    return Err(Error::Schema(format!(
                        "duplicate table {:?} in database {:?}",
                        t.name, db.name
                    )));
                }
                tables.push(load_table(base, t)?);
            }
            databases.push(Database {
                name: db.name,
                tables,
            });
        }
        Ok(Catalog { databases })
    }

    pub fn from_databases(databases: Vec<Database>) -> Result<Catalog> {
        let mut names = HashSet::new();
        for db in &databases {
            if !names.insert(&db.name) {
                return Err(Error::Schema(format!("duplicate database {:?}", db.name)));
            }
            let mut tables = HashSet::new();
            for t in &db.tables {
                if !tables.insert(&t.name) {
                    return Err(Error::Schema(format!("duplicate table {:?}", t.name)));
                }
            }
        }
        Ok(Catalog { databases })
    }

    pub fn databases(&self) -> &[Database] {
        &self.databases
    }

    pub fn database(&self, name: &str) -> Result<&Database> {
        self.databases
            .iter()
            .find(|d| d.name == name)
            .ok_or_else(|| Error::NotFound(format!("database {name:?}")))
    }

    /// The database to use when a request names none: the only one, if the
    /// catalog holds exactly one.
    pub fn default_database(&self) -> Option<&Database> {
        match self.databases.as_slice() {
            [only] => Some(only),
            _ => None,
        }
    }

    pub fn resolve_database(&self, name: Option<&str>) -> Result<&Database> {
        match name.filter(|n| !n.is_empty()) {
            Some(n) => self.database(n),
            None => self.default_database().ok_or_else(|| {
                Error::InvalidArgument(
                    "no database given and the catalog does not hold exactly one".into(),
                )
            }),
        }
    }

    pub fn table(&self, database: &str, table: &str) -> Result<&TableDef> {
        self.database(database)?
            .tables
            .iter()
            .find(|t| t.name == table)
            .ok_or_else(|| Error::NotFound(format!("table {table:?} in database {database:?}")))
    }

    pub fn schema_elements(&self, database: &str) -> Result<SchemaElements> {
        let db = self.database(database)?;
        Ok(SchemaElements {
            database: db.name.clone(),
            tables: db
                .tables
                .iter()
                .map(|t| TableSchema {
                    name: t.name.clone(),
                    columns: t.columns.clone(),
                })
                .collect(),
        })
    }

    /// Whole-table bytes of the named tables, each counted once.
    pub fn scan_bytes<S: AsRef<str>>(&self, database: &str, tables: &[S]) -> Result<u64> {
        let unique: BTreeSet<&str> = tables.iter().map(|t| t.as_ref()).collect();
        unique
            .into_iter()
            .map(|t| self.table(database, t).map(|def| def.byte_size))
            .sum()
    }
}

fn load_table(base: &Path, t: ManifestTable) -> Result<TableDef> {
    if t.name.is_empty() {
        return Err(Error::Schema("empty table name".into()));
    }
    if t.columns.is_empty() {
        return Err(Error::Schema(format!("table {:?} has no columns", t.name)));
    }
    let mut seen = HashSet::new();
    for c in &t.columns {
        if c.name.is_empty() {
            return Err(Error::Schema(format!("table {:?} has an unnamed column", t.name)));
        }
        if !seen.insert(&c.name) {
            return Err(Error::Schema(format!(
                "duplicate column {:?} in table {:?}",
                c.name, t.name
            )));
        }
    }

    let mut data_files = Vec::with_capacity(t.files.len());
    let mut row_count = 0u64;
    let mut byte_size = 0u64;
    for f in &t.files {
        let path = if f.is_absolute() { f.clone() } else { base.join(f) };
        let meta = fs::metadata(&path).map_err(|e| Error::load(&path, e))?;
        byte_size += meta.len();
        row_count += count_rows(&path, &t.columns)?;
        data_files.push(path);
    }
    Ok(TableDef {
        name: t.name,
        columns: t.columns,
        data_files,
        row_count,
        byte_size,
    })
}

/// Counts data rows and checks that the header matches the column list.
fn count_rows(path: &Path, columns: &[ColumnDef]) -> Result<u64> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::load(path, e))?;
    let header = reader.headers().map_err(|e| Error::load(path, e))?;
    let names: Vec<&str> = header.iter().collect();
    let expected: Vec<&str> = columns.iter().map(|c| c.name.as_str()).collect();
    if names != expected {
        return Err(Error::Schema(format!(
            "{}: header {names:?} does not match columns {expected:?}",
            path.display()
        )));
    }
    let mut rows = 0u64;
    let mut record = csv::ByteRecord::new();
    while reader
        .read_byte_record(&mut record)
        .map_err(|e| Error::load(path, e))?
    {
        rows += 1;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    fn nation_csv() -> String {
        let mut s = String::from("n_id,n_name\n");
        for i in 0..25 {
            s.push_str(&format!("{i},NATION_{i}\n"));
        }
        s
    }

    #[test]
    fn empty_manifest_gives_empty_catalog() {
        let dir = tempfile::tempdir().unwrap();
        let m = write(dir.path(), "m.json", r#"{"databases":[]}"#);
        let c = Catalog::load_manifest(&m).unwrap();
        assert!(c.databases().is_empty());
    }

    #[test]
    fn stats_match_the_data_file() {
        let dir = tempfile::tempdir().unwrap();
        let body = nation_csv();
        let csv = write(dir.path(), "nation.csv", &body);
        let m = write(
            dir.path(),
            "m.json",
            r#"{"databases":[{"name":"demo","tables":[{"name":"nation",
                "columns":[{"name":"n_id","dtype":"int64"},{"name":"n_name","dtype":"string"}],
                "files":["nation.csv"]}]}]}"#,
        );
        let c = Catalog::load_manifest(&m).unwrap();
        let t = c.table("demo", "nation").unwrap();
        // Independent oracle: line count minus header, and the file length.
        let lines = fs::read_to_string(&csv).unwrap().lines().count() as u64 - 1;
        assert_eq!(t.row_count, lines);
        assert_eq!(t.row_count, 25);
        assert_eq!(t.byte_size, fs::metadata(&csv).unwrap().len());
        assert_eq!(t.byte_size, body.len() as u64);
        // Deterministic reload.
        assert_eq!(Catalog::load_manifest(&m).unwrap(), c);
    }

    #[test]
    fn missing_data_file_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let m = write(
            dir.path(),
            "m.json",
            r#"{"databases":[{"name":"demo","tables":[{"name":"t",
                "columns":[{"name":"a","dtype":"int64"}],"files":["nope.csv"]}]}]}"#,
        );
        let err = Catalog::load_manifest(&m).unwrap_err();
        assert!(matches!(err, Error::Load { .. }));
        assert!(err.to_string().contains("nope.csv"));
    }

    #[test]
    fn missing_manifest_is_a_load_error() {
        let err = Catalog::load_manifest(Path::new("/definitely/not/here.json")).unwrap_err();
        assert!(err.to_string().contains("/definitely/not/here.json"));
    }

    #[test]
    fn duplicate_table_is_a_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let m = write(
            dir.path(),
            "m.json",
            r#"{"databases":[{"name":"demo","tables":[
                {"name":"t","columns":[{"name":"a","dtype":"int64"}]},
                {"name":"t","columns":[{"name":"a","dtype":"int64"}]}]}]}"#,
        );
        assert!(matches!(Catalog::load_manifest(&m), Err(Error::Schema(_))));
    }

    #[test]
    fn header_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "t.csv", "b,a\n1,2\n");
        let m = write(
            dir.path(),
            "m.json",
            r#"{"databases":[{"name":"demo","tables":[{"name":"t",
                "columns":[{"name":"a","dtype":"int64"},{"name":"b","dtype":"int64"}],
                "files":["t.csv"]}]}]}"#,
        );
        assert!(matches!(Catalog::load_manifest(&m), Err(Error::Schema(_))));
    }

    fn two_table_catalog() -> Catalog {
        let table = |name: &str, bytes| TableDef {
            name: name.into(),
            columns: vec![ColumnDef {
                name: "a".into(),
                dtype: DataType::Int64,
            }],
            data_files: vec![],
            row_count: 0,
            byte_size: bytes,
        };
        Catalog::from_databases(vec![Database {
            name: "db".into(),
            tables: vec![table("t1", 1000), table("t2", 2000)],
        }])
        .unwrap()
    }

    #[test]
    fn scan_bytes_sums_and_dedups() {
        let c = two_table_catalog();
        assert_eq!(c.scan_bytes::<&str>("db", &[]).unwrap(), 0);
        assert_eq!(c.scan_bytes("db", &["t1", "t2"]).unwrap(), 3000);
        assert_eq!(c.scan_bytes("db", &["t1", "t1"]).unwrap(), 1000);
        assert!(matches!(c.scan_bytes("db", &["zz"]), Err(Error::NotFound(_))));
    }

    #[test]
    fn schema_elements_keep_catalog_order() {
        let c = two_table_catalog();
        let s = c.schema_elements("db").unwrap();
        let names: Vec<_> = s.tables.iter().map(|t| t.name.as_str()).collect();
        assert_eq!(names, ["t1", "t2"]);
        assert_eq!(s.tables[0].columns.len(), 1);
        assert!(matches!(c.schema_elements("x"), Err(Error::NotFound(_))));
    }
}
