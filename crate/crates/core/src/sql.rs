//! Minimal read-only query interface for backend verification.
//!
//! Verification queries are parameterized SELECT templates with `?`-style
//! positional placeholders only:
//!
//! ```text
//! SELECT body FROM sms WHERE thread = ? AND body = ?
//! SELECT COUNT(*) FROM posts WHERE author = ?
//! ```
//!
//! Any SQL-speaking backend can implement [`DbInterface`]; the simulator
//! fulfills it over its data stores so task suites run fully offline.

use serde_json::Value;
use thiserror::Error;

use crate::device::DeviceState;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DbError {
    #[error("database unavailable: {0}")]
    Unavailable(String),
    #[error("bad query: {0}")]
    BadQuery(String),
}

pub trait DbInterface {
    /// Executes a read-only template with positional parameters, returning
    /// rows of column values.
    fn query(&self, template: &str, params: &[String]) -> Result<Vec<Vec<Value>>, DbError>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Columns {
    All,
    Count,
    Named(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct SelectQuery {
    columns: Columns,
    table: String,
    /// Field names compared for equality against positional params, in order.
    conditions: Vec<String>,
}

fn parse_select(template: &str) -> Result<SelectQuery, DbError> {
    let bad = |reason: &str| DbError::BadQuery(format!("{reason} in {template:?}"));
    let mut rest = template.trim();

    rest = strip_keyword(rest, "SELECT").ok_or_else(|| bad("expected SELECT"))?;
    let from_pos = find_keyword(rest, "FROM").ok_or_else(|| bad("expected FROM"))?;
    let cols_src = rest[..from_pos].trim();
    rest = rest[from_pos + "FROM".len()..].trim();

    let columns = if cols_src == "*" {
        Columns::All
    } else if cols_src.eq_ignore_ascii_case("COUNT(*)") {
        Columns::Count
    } else {
        let names: Vec<String> = cols_src.split(',').map(|c| c.trim().to_string()).collect();
        if names.iter().any(|n| n.is_empty() || !is_identifier(n)) {
            return Err(bad("bad column list"));
        }
        Columns::Named(names)
    };

    let (table, conditions) = match find_keyword(rest, "WHERE") {
        None => (rest.trim(), Vec::new()),
        Some(pos) => {
            let table = rest[..pos].trim();
            let cond_src = rest[pos + "WHERE".len()..].trim();
            let mut conditions = Vec::new();
            for clause in split_keyword(cond_src, "AND") {
                let (field, value) = clause.split_once('=').ok_or_else(|| bad("conditions must be field = ?"))?;
                let field = field.trim();
                if !is_identifier(field) {
                    return Err(bad("bad condition field"));
                }
                if value.trim() != "?" {
                    return Err(bad("only positional `?` placeholders are allowed"));
                }
                conditions.push(field.to_string());
            }
            (table, conditions)
        }
    };
    if !is_identifier(table) {
        return Err(bad("bad table name"));
    }
    Ok(SelectQuery { columns, table: table.to_string(), conditions })
}

fn is_identifier(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn strip_keyword<'a>(s: &'a str, kw: &str) -> Option<&'a str> {
    let head = s.get(..kw.len())?;
    head.eq_ignore_ascii_case(kw).then(|| s[kw.len()..].trim_start())
}

fn find_keyword(s: &str, kw: &str) -> Option<usize> {
    let upper = s.to_ascii_uppercase();
    let mut from = 0;
    while let Some(pos) = upper[from..].find(kw) {
        let abs = from + pos;
        let before_ok = abs == 0 || upper.as_bytes()[abs - 1].is_ascii_whitespace();
        let after = abs + kw.len();
        let after_ok = after >= upper.len() || upper.as_bytes()[after].is_ascii_whitespace();
        if before_ok && after_ok {
            return Some(abs);
        }
        from = abs + kw.len();
    }
    None
}

fn split_keyword<'a>(s: &'a str, kw: &str) -> Vec<&'a str> {
    let mut parts = Vec::new();
    let mut rest = s;
    while let Some(pos) = find_keyword(rest, kw) {
        parts.push(rest[..pos].trim());
        rest = &rest[pos + kw.len()..];
    }
    parts.push(rest.trim());
    parts
}

/// Scalar text form used for parameter comparison and scalar expectations.
pub fn value_to_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

/// The simulator's backend database: SELECT templates evaluated over the
/// device's data stores, rows in store order, columns in key order.
pub struct SimDb<'a> {
    state: &'a DeviceState,
}

impl<'a> SimDb<'a> {
    pub fn new(state: &'a DeviceState) -> Self {
        Self { state }
    }
}

impl DbInterface for SimDb<'_> {
    fn query(&self, template: &str, params: &[String]) -> Result<Vec<Vec<Value>>, DbError> {
        let query = parse_select(template)?;
        if query.conditions.len() != params.len() {
            return Err(DbError::BadQuery(format!(
                "{} placeholders but {} params",
                query.conditions.len(),
                params.len()
            )));
        }
        let store = self
            .state
            .stores
            .get(&query.table)
            .ok_or_else(|| DbError::BadQuery(format!("unknown store {:?}", query.table)))?;

        let matching = store.rows.iter().filter(|row| {
            query
                .conditions
                .iter()
                .zip(params)
                .all(|(field, param)| row.get(field).map(value_to_text).as_deref() == Some(param.as_str()))
        });

        Ok(match &query.columns {
            Columns::Count => vec![vec![Value::from(matching.count() as u64)]],
            Columns::All => matching.map(|row| row.values().cloned().collect()).collect(),
            Columns::Named(names) => matching
                .map(|row| names.iter().map(|n| row.get(n).cloned().unwrap_or(Value::Null)).collect())
                .collect(),
        })
    }
}
