//! Text-to-SQL wrappers. Every backend sits behind one interface and
//! returns SQL verbatim; validation happens when the query is submitted.

use std::sync::LazyLock;
use std::time::Duration;

use async_trait::async_trait;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::json;
use turbodb_core::catalog::SchemaElements;
use turbodb_core::value::DataType;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TranslateRequest {
    pub question: String,
    pub database: String,
    pub schema_elements: SchemaElements,
}

#[derive(Debug, thiserror::Error)]
pub enum TranslateError {
    #[error("the question matches no template")]
    NoMatch,
    #[error("translator unreachable: {0}")]
    Unreachable(String),
    #[error("translator returned an unusable response: {0}")]
    BadResponse(String),
}

#[async_trait]
pub trait TranslatorWrapper: Send + Sync {
    async fn translate(&self, request: &TranslateRequest) -> Result<String, TranslateError>;
}

static COUNT_ROWS: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?i:how many rows (?:are )?in) (\w+)$").unwrap());
static SHOW: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?i:show) (\w+(?:\s*,\s*\w+)*) (?i:from) (\w+)(?: (?i:where) (\w+) ?(<>|!=|<=|>=|=|<|>) ?(.+))?$")
        .unwrap()
});
static GROUPED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?i:(total|average|sum of|avg of)) (\w+) (?i:by) (\w+) (?i:in) (\w+)$").unwrap());

/// Deterministic pattern translator:
/// - `how many rows in <table>`
/// - `show <columns> from <table> [where <column> <op> <literal>]`
/// - `total|average <column> by <column> in <table>`
#[derive(Debug, Clone, Default)]
pub struct TemplateTranslator;

impl TemplateTranslator {
    pub fn translate_text(&self, question: &str, schema: &SchemaElements) -> Result<String, TranslateError> {
        let q = question.trim().trim_end_matches(['?', '.', '!']).trim();
        let q = q.split_whitespace().collect::<Vec<_>>().join(" ");
        if let Some(m) = COUNT_ROWS.captures(&q) {
            return Ok(format!("SELECT COUNT(*) FROM {}", &m[1]));
        }
        if let Some(m) = SHOW.captures(&q) {
            let cols: Vec<&str> = m[1].split(',').map(str::trim).collect();
            let mut sql = format!("SELECT {} FROM {}", cols.join(", "), &m[2]);
            if let (Some(col), Some(op), Some(lit)) = (m.get(3), m.get(4), m.get(5)) {
                let op = if op.as_str() == "!=" { "<>" } else { op.as_str() };
                let dtype = column_type(schema, &m[2], col.as_str());
                sql.push_str(&format!(" WHERE {} {op} {}", col.as_str(), literal(lit.as_str(), dtype)));
            }
            return Ok(sql);
        }
        if let Some(m) = GROUPED.captures(&q) {
            let func = if m[1].to_ascii_lowercase().starts_with("av") { "AVG" } else { "SUM" };
            return Ok(format!(
                "SELECT {by}, {func}({col}) FROM {table} GROUP BY {by}",
                col = &m[2],
                by = &m[3],
                table = &m[4]
            ));
        }
        Err(TranslateError::NoMatch)
    }
}

#[async_trait]
impl TranslatorWrapper for TemplateTranslator {
    async fn translate(&self, request: &TranslateRequest) -> Result<String, TranslateError> {
        self.translate_text(&request.question, &request.schema_elements)
    }
}

fn column_type(schema: &SchemaElements, table: &str, column: &str) -> Option<DataType> {
    schema
        .tables
        .iter()
        .find(|t| t.name == table)?
        .columns
        .iter()
        .find(|c| c.name == column)
        .map(|c| c.dtype)
}

/// Renders a literal the way the column expects it. Quoted text passes
/// through; unknown columns get a number or a quoted string.
fn literal(text: &str, dtype: Option<DataType>) -> String {
    let text = text.trim();
    if text.starts_with('\'') && text.ends_with('\'') && text.len() >= 2 {
        return match dtype {
            Some(DataType::Date) => format!("DATE {text}"),
            _ => text.to_string(),
        };
    }
    let quoted = || format!("'{}'", text.replace('\'', "''"));
    match dtype {
        Some(DataType::Date) => format!("DATE {}", quoted()),
        Some(DataType::String) => quoted(),
        Some(DataType::Bool) => text.to_ascii_uppercase(),
        _ if text.parse::<f64>().is_ok() => text.to_string(),
        _ => quoted(),
    }
}

/// Forwards the question and schema to an external service:
/// `POST {question, schema: {tables: [{name, columns: [...]}]}}` answered
/// by `{sql}`.
#[derive(Debug, Clone)]
pub struct HttpTranslator {
    endpoint: String,
    client: reqwest::Client,
}

impl HttpTranslator {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Result<HttpTranslator, TranslateError> {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| TranslateError::Unreachable(e.to_string()))?;
        Ok(HttpTranslator {
            endpoint: endpoint.into(),
            client,
        })
    }
}

#[derive(Deserialize)]
struct HttpAnswer {
    sql: String,
}

#[async_trait]
impl TranslatorWrapper for HttpTranslator {
    async fn translate(&self, request: &TranslateRequest) -> Result<String, TranslateError> {
        let tables: Vec<_> = request
            .schema_elements
            .tables
            .iter()
            .map(|t| json!({"name": t.name, "columns": t.columns.iter().map(|c| &c.name).collect::<Vec<_>>()}))
            .collect();
        let body = json!({"question": request.question, "schema": {"tables": tables}});
        let resp = self
            .client
            .post(&self.endpoint)
            .json(&body)
            .send()
            .await
            .map_err(|e| TranslateError::Unreachable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(TranslateError::BadResponse(format!("status {}", resp.status())));
        }
        let answer: HttpAnswer = resp
            .json()
            .await
            .map_err(|e| TranslateError::BadResponse(e.to_string()))?;
        Ok(answer.sql)
    }
}
