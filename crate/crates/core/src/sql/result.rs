use serde::ser::{Serialize, SerializeStruct, Serializer};

use super::plan::Schema;
use crate::value::{DataType, Row};

/// Final rows of a query, cut to the submitter's result-size limit.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultSet {
    pub columns: Vec<String>,
    pub types: Vec<DataType>,
    pub rows: Vec<Row>,
    pub truncated: bool,
    pub rows_before_truncation: u64,
}

impl ResultSet {
    pub fn new(schema: &Schema, mut rows: Vec<Row>, limit: Option<usize>) -> ResultSet {
        let total = rows.len() as u64;
        if let Some(limit) = limit {
            rows.truncate(limit);
        }
        ResultSet {
            columns: schema.iter().map(|f| f.name.clone()).collect(),
            types: schema.iter().map(|f| f.dtype).collect(),
            truncated: total > rows.len() as u64,
            rows,
            rows_before_truncation: total,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("result sets always serialize")
    }
}

impl Serialize for ResultSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<serde_json::Value>> = self
            .rows
            .iter()
            .map(|r| r.iter().map(|v| v.to_json()).collect())
            .collect();
        let mut s = serializer.serialize_struct("ResultSet", 5)?;
        s.serialize_field("columns", &self.columns)?;
        s.serialize_field("types", &self.types)?;
        s.serialize_field("rows", &rows)?;
        s.serialize_field("truncated", &self.truncated)?;
        s.serialize_field("rowsBeforeTruncation", &self.rows_before_truncation)?;
        s.end()
    }
}
