//! The four deterministic verification strategies.
//!
//! Each task carries exactly one evaluator configuration; after the episode
//! terminates, the matching evaluator inspects the final world (answer text,
//! backend database, local storage, or callback event log) and produces a
//! binary verdict. Evaluators are total and read-only: infrastructure
//! failures are flagged on the verdict, never thrown past the runner.

use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::device::transport::{with_retries, DeviceTransport};
use crate::device::{DeviceState, StoreKind};
use crate::predicate::Predicate;
use crate::sql::{value_to_text, DbInterface, SimDb};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    TextMatch,
    DbVerify,
    StorageInspect,
    AppCallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextMatcher {
    Exact,
    Regex,
}

fn default_true() -> bool {
    true
}

/// Text normalization applied before matching. Defaults are strict: trim and
/// collapse internal whitespace, case-sensitive. Case folding is opt-in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Normalize {
    #[serde(default = "default_true")]
    pub trim: bool,
    #[serde(default)]
    pub case_fold: bool,
    #[serde(default = "default_true")]
    pub collapse_whitespace: bool,
}

impl Default for Normalize {
    fn default() -> Self {
        Self { trim: true, case_fold: false, collapse_whitespace: true }
    }
}

impl Normalize {
    pub fn apply(&self, s: &str) -> String {
        let mut out = if self.collapse_whitespace {
            s.split_whitespace().collect::<Vec<_>>().join(" ")
        } else {
            s.to_string()
        };
        if self.trim {
            out = out.trim().to_string();
        }
        if self.case_fold {
            out = out.to_lowercase();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DbExpectation {
    RowExists,
    ScalarEquals(String),
}

/// Where a storage inspection looks: the simulator's stores, or a shell
/// command on a real device whose stdout is matched against a pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StorageTarget {
    Sim { store: String, predicate: Predicate },
    Remote { command: String, expected_pattern: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EvaluatorConfig {
    TextMatch {
        expected: String,
        #[serde(default = "default_exact")]
        matcher: TextMatcher,
        #[serde(default)]
        normalize: Normalize,
        /// Regex patterns must match the whole normalized answer unless
        /// explicitly relaxed.
        #[serde(default = "default_true")]
        full_match: bool,
    },
    DbVerify {
        #[serde(default = "default_connection")]
        connection: String,
        query: String,
        #[serde(default)]
        params: Vec<String>,
        expectation: DbExpectation,
    },
    StorageInspect {
        #[serde(flatten)]
        target: StorageTarget,
    },
    AppCallback {
        #[serde(default = "default_callback_store")]
        store: String,
        event_kind: String,
        #[serde(rename = "match")]
        predicate: Predicate,
    },
}

fn default_exact() -> TextMatcher {
    TextMatcher::Exact
}

fn default_connection() -> String {
    "sim".to_string()
}

fn default_callback_store() -> String {
    "callback_events".to_string()
}

impl EvaluatorConfig {
    pub fn mode(&self) -> EvalMode {
        match self {
            EvaluatorConfig::TextMatch { .. } => EvalMode::TextMatch,
            EvaluatorConfig::DbVerify { .. } => EvalMode::DbVerify,
            EvaluatorConfig::StorageInspect { .. } => EvalMode::StorageInspect,
            EvaluatorConfig::AppCallback { .. } => EvalMode::AppCallback,
        }
    }

    /// Compile-checks regex payloads so broken configs fail at load time.
    pub fn validate(&self) -> Result<(), String> {
        match self {
            EvaluatorConfig::TextMatch { expected, matcher: TextMatcher::Regex, .. } => {
                Regex::new(expected).map(|_| ()).map_err(|e| format!("bad regex {expected:?}: {e}"))
            }
            EvaluatorConfig::StorageInspect { target: StorageTarget::Remote { expected_pattern, .. } } => {
                Regex::new(expected_pattern)
                    .map(|_| ())
                    .map_err(|e| format!("bad pattern {expected_pattern:?}: {e}"))
            }
            _ => Ok(()),
        }
    }
}

/// The binary task score with the evidence that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Verdict {
    pub score: u8,
    pub mode: EvalMode,
    pub evidence: String,
    /// Wall time of the evaluation; excluded from persisted trace bytes and
    /// from equality, which compares the verdict's substance only.
    #[serde(skip, default)]
    pub duration: Duration,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub infrastructure: bool,
}

impl PartialEq for Verdict {
    fn eq(&self, other: &Self) -> bool {
        self.score == other.score
            && self.mode == other.mode
            && self.evidence == other.evidence
            && self.infrastructure == other.infrastructure
    }
}

impl Verdict {
    fn pass(mode: EvalMode, evidence: String, started: Instant) -> Self {
        debug_assert!(!evidence.is_empty(), "passing verdicts carry evidence");
        Self { score: 1, mode, evidence, duration: started.elapsed(), infrastructure: false }
    }

    fn fail(mode: EvalMode, evidence: String, started: Instant) -> Self {
        Self { score: 0, mode, evidence, duration: started.elapsed(), infrastructure: false }
    }

    fn infra(mode: EvalMode, evidence: String, started: Instant) -> Self {
        Self { score: 0, mode, evidence, duration: started.elapsed(), infrastructure: true }
    }
}

/// Textual answer verification against the agent's terminal `answer` text.
pub fn eval_text(cfg: &EvaluatorConfig, agent_answer: Option<&str>) -> Verdict {
    let started = Instant::now();
    let EvaluatorConfig::TextMatch { expected, matcher, normalize, full_match } = cfg else {
        return Verdict::infra(cfg.mode(), "config is not text_match".into(), started);
    };
    let Some(answer) = agent_answer else {
        return Verdict::fail(EvalMode::TextMatch, "no answer action was issued".into(), started);
    };
    let normalized = normalize.apply(answer);
    match matcher {
        TextMatcher::Exact => {
            let want = normalize.apply(expected);
            if normalized == want {
                Verdict::pass(EvalMode::TextMatch, format!("answer {normalized:?} matched expected text"), started)
            } else {
                Verdict::fail(
                    EvalMode::TextMatch,
                    format!("answer {normalized:?} != expected {want:?}"),
                    started,
                )
            }
        }
        TextMatcher::Regex => {
            let pattern = if *full_match { format!(r"\A(?:{expected})\z") } else { expected.clone() };
            match Regex::new(&pattern) {
                Ok(re) if re.is_match(&normalized) => Verdict::pass(
                    EvalMode::TextMatch,
                    format!("answer {normalized:?} matched pattern {expected:?}"),
                    started,
                ),
                Ok(_) => Verdict::fail(
                    EvalMode::TextMatch,
                    format!("answer {normalized:?} did not match pattern {expected:?}"),
                    started,
                ),
                Err(e) => Verdict::infra(EvalMode::TextMatch, format!("bad pattern: {e}"), started),
            }
        }
    }
}

/// Backend database verification through the minimal query interface.
pub fn eval_db(cfg: &EvaluatorConfig, db: &dyn DbInterface) -> Verdict {
    let started = Instant::now();
    let EvaluatorConfig::DbVerify { query, params, expectation, .. } = cfg else {
        return Verdict::infra(cfg.mode(), "config is not db_verify".into(), started);
    };
    let rows = match db.query(query, params) {
        Ok(rows) => rows,
        Err(e) => return Verdict::infra(EvalMode::DbVerify, format!("db unavailable: {e}"), started),
    };
    match expectation {
        DbExpectation::RowExists => {
            if rows.is_empty() {
                Verdict::fail(EvalMode::DbVerify, "query returned no rows".into(), started)
            } else {
                let shown = rows[0].iter().map(value_to_text).collect::<Vec<_>>().join(", ");
                Verdict::pass(EvalMode::DbVerify, format!("{} row(s); first: [{shown}]", rows.len()), started)
            }
        }
        DbExpectation::ScalarEquals(want) => {
            let normalize = Normalize::default();
            let Some(cell) = rows.first().and_then(|r| r.first()) else {
                return Verdict::fail(EvalMode::DbVerify, "query returned no rows".into(), started);
            };
            let got = normalize.apply(&value_to_text(cell));
            let want_n = normalize.apply(want);
            if got == want_n {
                Verdict::pass(EvalMode::DbVerify, format!("scalar {got:?} matched"), started)
            } else {
                Verdict::fail(EvalMode::DbVerify, format!("scalar {got:?} != expected {want_n:?}"), started)
            }
        }
    }
}

/// Local storage inspection on the simulated device.
pub fn eval_storage(cfg: &EvaluatorConfig, device: &DeviceState) -> Verdict {
    let started = Instant::now();
    let EvaluatorConfig::StorageInspect { target } = cfg else {
        return Verdict::infra(cfg.mode(), "config is not storage_inspect".into(), started);
    };
    match target {
        StorageTarget::Sim { store, predicate } => match device.exec_query(store, predicate) {
            Ok(rows) if rows.is_empty() => {
                Verdict::fail(EvalMode::StorageInspect, format!("no matching record in {store:?}"), started)
            }
            Ok(rows) => {
                let shown = serde_json::to_string(&rows[0]).unwrap_or_default();
                Verdict::pass(EvalMode::StorageInspect, format!("matched record {shown}"), started)
            }
            Err(e) => Verdict::infra(EvalMode::StorageInspect, e.to_string(), started),
        },
        StorageTarget::Remote { .. } => Verdict::infra(
            EvalMode::StorageInspect,
            "remote storage target requires a device transport".into(),
            started,
        ),
    }
}

/// Local storage inspection through a real-device transport: runs the
/// configured command and matches stdout against the expected pattern.
pub fn eval_storage_remote(cfg: &EvaluatorConfig, transport: &mut dyn DeviceTransport) -> Verdict {
    let started = Instant::now();
    let EvaluatorConfig::StorageInspect { target: StorageTarget::Remote { command, expected_pattern } } = cfg
    else {
        return Verdict::infra(cfg.mode(), "config is not a remote storage_inspect".into(), started);
    };
    let result = match with_retries(3, || transport.exec(command)) {
        Ok(r) => r,
        Err(e) => return Verdict::infra(EvalMode::StorageInspect, e.to_string(), started),
    };
    let stdout = String::from_utf8_lossy(&result.stdout);
    match Regex::new(expected_pattern) {
        Ok(re) => match re.find(&stdout) {
            Some(m) => Verdict::pass(EvalMode::StorageInspect, format!("stdout matched {:?}", m.as_str()), started),
            None => Verdict::fail(
                EvalMode::StorageInspect,
                format!("stdout did not match pattern {expected_pattern:?}"),
                started,
            ),
        },
        Err(e) => Verdict::infra(EvalMode::StorageInspect, format!("bad pattern: {e}"), started),
    }
}

/// Callback verification: scans the append-only event log for the first
/// event of the configured kind satisfying the predicate.
pub fn eval_callback(cfg: &EvaluatorConfig, device: &DeviceState) -> Verdict {
    let started = Instant::now();
    let EvaluatorConfig::AppCallback { store, event_kind, predicate } = cfg else {
        return Verdict::infra(cfg.mode(), "config is not app_callback".into(), started);
    };
    let Some(events) = device.stores.get(store) else {
        return Verdict::infra(EvalMode::AppCallback, format!("unknown store {store:?}"), started);
    };
    debug_assert_eq!(events.kind, StoreKind::CallbackEvents);
    let hit = events.rows.iter().find(|row| {
        row.get("event").map(value_to_text).as_deref() == Some(event_kind.as_str())
            && predicate.matches(&Value::Object((*row).clone()))
    });
    match hit {
        Some(row) => {
            let shown = serde_json::to_string(row).unwrap_or_default();
            Verdict::pass(EvalMode::AppCallback, format!("matched event {shown}"), started)
        }
        None => Verdict::fail(EvalMode::AppCallback, format!("no matching {event_kind:?} event"), started),
    }
}

/// Runs the evaluator a task is configured with against the simulated world.
pub fn evaluate(cfg: &EvaluatorConfig, device: &DeviceState, agent_answer: Option<&str>) -> Verdict {
    match cfg.mode() {
        EvalMode::TextMatch => eval_text(cfg, agent_answer),
        EvalMode::DbVerify => eval_db(cfg, &SimDb::new(device)),
        EvalMode::StorageInspect => eval_storage(cfg, device),
        EvalMode::AppCallback => eval_callback(cfg, device),
    }
}
