//! Field predicates over structured records.
//!
//! Used by the store query engine, the storage/callback evaluators, and app
//! fixture transition rules. Predicates are plain data so task authors can
//! write them inline in fixture files.

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    /// Every child predicate matches. `all: []` matches everything.
    All(Vec<Predicate>),
    /// At least one child predicate matches.
    Any(Vec<Predicate>),
    Not(Box<Predicate>),
    /// Compare one field of the record against a literal.
    Cmp { field: String, op: CmpOp, value: Value },
    /// The field is present (dotted paths descend into nested objects).
    Exists(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CmpOp {
    Eq,
    Ne,
    /// String containment, array membership, or object key presence.
    Contains,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Predicate {
    pub fn matches(&self, record: &Value) -> bool {
        match self {
            Predicate::All(ps) => ps.iter().all(|p| p.matches(record)),
            Predicate::Any(ps) => ps.iter().any(|p| p.matches(record)),
            Predicate::Not(p) => !p.matches(record),
            Predicate::Cmp { field, op, value } => match lookup(record, field) {
                Some(actual) => compare(actual, *op, value),
                None => false,
            },
            Predicate::Exists(field) => lookup(record, field).is_some(),
        }
    }

    /// Convenience constructor for the common equality case.
    pub fn field_eq(field: impl Into<String>, value: impl Into<Value>) -> Self {
        Predicate::Cmp { field: field.into(), op: CmpOp::Eq, value: value.into() }
    }
}

fn lookup<'a>(record: &'a Value, path: &str) -> Option<&'a Value> {
    let mut cur = record;
    for part in path.split('.') {
        cur = cur.as_object()?.get(part)?;
    }
    Some(cur)
}

fn compare(actual: &Value, op: CmpOp, expected: &Value) -> bool {
    match op {
        CmpOp::Eq => actual == expected,
        CmpOp::Ne => actual != expected,
        CmpOp::Contains => match (actual, expected) {
            (Value::String(hay), Value::String(needle)) => hay.contains(needle.as_str()),
            (Value::Array(items), needle) => items.iter().any(|i| i == needle),
            (Value::Object(map), Value::String(key)) => map.contains_key(key),
            _ => false,
        },
        CmpOp::Lt | CmpOp::Le | CmpOp::Gt | CmpOp::Ge => {
            let (Some(a), Some(b)) = (actual.as_f64(), expected.as_f64()) else {
                return false;
            };
            match op {
                CmpOp::Lt => a < b,
                CmpOp::Le => a <= b,
                CmpOp::Gt => a > b,
                CmpOp::Ge => a >= b,
                _ => unreachable!(),
            }
        }
    }
}
