//! Append-only store for intermediate results of sub-plan tasks.
//!
//! Keys are `qid/<queryId>/task/<taskId>.csv`. The directory-backed store
//! writes real CSV files in the catalog's dialect; the in-memory store keeps
//! the rows and is used by the simulator, where thousands of fragments run
//! per scenario.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::plan::Schema;
use crate::error::{Error, Result};
use crate::value::{Row, Value};
use crate::QueryId;

pub fn key(query_id: QueryId, task_id: usize) -> String {
    format!("qid/{query_id}/task/{task_id}.csv")
}

/// Size in bytes of the rows written as CSV data lines.
pub fn csv_bytes(rows: &[Row]) -> u64 {
    rows.iter()
        .map(|r| r.iter().map(|v| v.render().len() as u64 + 1).sum::<u64>())
        .sum()
}

#[derive(Debug)]
pub enum IntermediateStore {
    Dir(PathBuf),
    Memory(Mutex<HashMap<String, Vec<Row>>>),
}

impl IntermediateStore {
    pub fn in_memory() -> IntermediateStore {
        IntermediateStore::Memory(Mutex::new(HashMap::new()))
    }

    pub fn in_dir(root: impl Into<PathBuf>) -> IntermediateStore {
        IntermediateStore::Dir(root.into())
    }

    /// Writes one task's output. Each key may be written once.
    pub fn put(&self, query_id: QueryId, task_id: usize, schema: &Schema, rows: Vec<Row>) -> Result<()> {
        let k = key(query_id, task_id);
        match self {
            IntermediateStore::Memory(map) => {
                let mut map = map.lock().expect("store lock");
                if map.contains_key(&k) {
                    return Err(Error::Invariant(format!("intermediate result {k} written twice")));
                }
                map.insert(k, rows);
                Ok(())
            }
            IntermediateStore::Dir(root) => {
                let path = root.join(&k);
                if path.exists() {
                    return Err(Error::Invariant(format!("intermediate result {k} written twice")));
                }
                let dir = path.parent().expect("key has a parent");
                fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
                write_csv(&path, schema, &rows)
            }
        }
    }

    pub fn get(&self, query_id: QueryId, task_id: usize, schema: &Schema) -> Result<Vec<Row>> {
        let k = key(query_id, task_id);
        match self {
            IntermediateStore::Memory(map) => map
                .lock()
                .expect("store lock")
                .get(&k)
                .cloned()
                .ok_or_else(|| Error::Execution(format!("missing intermediate result {k}"))),
            IntermediateStore::Dir(root) => read_csv(&root.join(&k), schema),
        }
    }

    /// Drops every result of a finished query.
    pub fn release(&self, query_id: QueryId) {
        let prefix = format!("qid/{query_id}/");
        match self {
            IntermediateStore::Memory(map) => {
                map.lock().expect("store lock").retain(|k, _| !k.starts_with(&prefix));
            }
            IntermediateStore::Dir(root) => {
                let _ = fs::remove_dir_all(root.join(prefix));
            }
        }
    }
}

fn io_error(path: &Path, e: impl ToString) -> Error {
    Error::Execution(format!("{}: {}", path.display(), e.to_string()))
}

fn write_csv(path: &Path, schema: &Schema, rows: &[Row]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_error(path, e))?;
    w.write_record(schema.iter().map(|f| f.name.as_str()))
        .map_err(|e| io_error(path, e))?;
    for row in rows {
        w.write_record(row.iter().map(Value::render))
            .map_err(|e| io_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

fn read_csv(path: &Path, schema: &Schema) -> Result<Vec<Row>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_error(path, e))?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| io_error(path, e))?;
        if rec.len() != schema.len() {
            return Err(io_error(path, format!("expected {} fields, found {}", schema.len(), rec.len())));
        }
        rows.push(
            rec.iter()
                .zip(schema)
                .map(|(text, f)| Value::parse(text, f.dtype))
                .collect::<Result<Row>>()?,
        );
    }
    Ok(rows)
}
