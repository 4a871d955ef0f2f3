//! Run-level metrics: success rates, step/query/tool-call averages, and the
//! user-interaction quality score.
//!
//! All functions are pure over immutable record lists and computed in double
//! precision; rendering rounds success rates to one decimal (as percentages)
//! and UIQ to two decimals.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("metric {0} is undefined over an empty record set")]
    EmptySet(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Hash)]
#[serde(rename_all = "snake_case")]
pub enum TaskCategory {
    GuiOnly,
    Interaction,
    Mcp,
}

impl TaskCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskCategory::GuiOnly => "gui_only",
            TaskCategory::Interaction => "interaction",
            TaskCategory::Mcp => "mcp",
        }
    }
}

/// One finished episode: binary score `s`, trajectory length `t`, `ask_user`
/// count `c`, and `mcp_call` count `m`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub task_id: String,
    pub category: TaskCategory,
    pub s: u8,
    pub t: u32,
    pub c: u32,
    pub m: u32,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub infra_failed: bool,
}

impl EpisodeRecord {
    fn check(&self) {
        debug_assert!(self.s <= 1);
        debug_assert!(self.c <= self.t && self.m <= self.t);
    }
}

/// Overall success rate: the mean of the binary scores. Integer accumulation
/// keeps every metric exactly permutation-invariant.
pub fn success_rate(records: &[EpisodeRecord]) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptySet("success_rate"));
    }
    records.iter().for_each(EpisodeRecord::check);
    Ok(records.iter().map(|r| r.s as u64).sum::<u64>() as f64 / records.len() as f64)
}

/// Success rate over one task category.
pub fn category_sr(records: &[EpisodeRecord], category: TaskCategory) -> Result<f64, MetricsError> {
    let subset: Vec<_> = records.iter().filter(|r| r.category == category).cloned().collect();
    if subset.is_empty() {
        return Err(MetricsError::EmptySet("category_sr"));
    }
    success_rate(&subset)
}

/// Mean trajectory length across all episodes, successful and failed alike.
pub fn avg_steps(records: &[EpisodeRecord]) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptySet("avg_steps"));
    }
    Ok(records.iter().map(|r| r.t as u64).sum::<u64>() as f64 / records.len() as f64)
}

/// Mean `ask_user` count over interaction tasks only.
pub fn avg_queries(records: &[EpisodeRecord]) -> Result<f64, MetricsError> {
    let interact: Vec<_> = records.iter().filter(|r| r.category == TaskCategory::Interaction).collect();
    if interact.is_empty() {
        return Err(MetricsError::EmptySet("avg_queries"));
    }
    Ok(interact.iter().map(|r| r.c as u64).sum::<u64>() as f64 / interact.len() as f64)
}

/// User-interaction quality. Per interaction task the quality is `s / c`
/// when the agent asked at least once and 0 otherwise; the sum is divided by
/// the number of interaction tasks plus the number of non-interaction tasks
/// on which the agent asked anyway (each such task counts once, however many
/// questions it asked).
pub fn uiq(records: &[EpisodeRecord]) -> Result<f64, MetricsError> {
    let interact_count = records.iter().filter(|r| r.category == TaskCategory::Interaction).count();
    if interact_count == 0 {
        return Err(MetricsError::EmptySet("uiq"));
    }
    // Summed in value order so any permutation of the records produces the
    // bit-identical result.
    let mut qualities: Vec<f64> = records
        .iter()
        .filter(|r| r.category == TaskCategory::Interaction)
        .map(|r| if r.c > 0 { r.s as f64 / r.c as f64 } else { 0.0 })
        .collect();
    qualities.sort_by(f64::total_cmp);
    let quality_sum: f64 = qualities.iter().sum();
    let triggered = triggered_count(records);
    Ok(quality_sum / (interact_count + triggered) as f64)
}

/// Non-interaction tasks on which the agent invoked `ask_user` at least once.
pub fn triggered_count(records: &[EpisodeRecord]) -> usize {
    records.iter().filter(|r| r.category != TaskCategory::Interaction && r.c >= 1).count()
}

/// Mean `mcp_call` count over MCP-augmented tasks only.
pub fn avg_mcp_calls(records: &[EpisodeRecord]) -> Result<f64, MetricsError> {
    let mcp: Vec<_> = records.iter().filter(|r| r.category == TaskCategory::Mcp).collect();
    if mcp.is_empty() {
        return Err(MetricsError::EmptySet("avg_mcp_calls"));
    }
    Ok(mcp.iter().map(|r| r.m as u64).sum::<u64>() as f64 / mcp.len() as f64)
}

/// Everything the run report shows. Metrics that are undefined for the
/// record set (an empty category) are absent rather than zeroed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub total: usize,
    pub category_counts: BTreeMap<TaskCategory, usize>,
    pub sr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sr_gui_only: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sr_interact: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sr_mcp: Option<f64>,
    pub avg_steps: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub avg_queries: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub uiq: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub avg_mcp_calls: Option<f64>,
    pub triggered_count: usize,
}

pub fn build_report(records: &[EpisodeRecord]) -> Result<MetricsReport, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptySet("build_report"));
    }
    let mut category_counts = BTreeMap::new();
    for r in records {
        *category_counts.entry(r.category).or_insert(0) += 1;
    }
    Ok(MetricsReport {
        total: records.len(),
        category_counts,
        sr: success_rate(records)?,
        sr_gui_only: category_sr(records, TaskCategory::GuiOnly).ok(),
        sr_interact: category_sr(records, TaskCategory::Interaction).ok(),
        sr_mcp: category_sr(records, TaskCategory::Mcp).ok(),
        avg_steps: avg_steps(records)?,
        avg_queries: avg_queries(records).ok(),
        uiq: uiq(records).ok(),
        avg_mcp_calls: avg_mcp_calls(records).ok(),
        triggered_count: triggered_count(records),
    })
}

impl MetricsReport {
    /// Aligned plain-text table. Success rates print as percentages with one
    /// decimal, UIQ with two; absent metrics print as "-".
    pub fn render_text(&self, header_note: &str) -> String {
        fn pct(v: Option<f64>) -> String {
            v.map_or_else(|| "-".to_string(), |v| format!("{:.1}", v * 100.0))
        }
        fn two(v: Option<f64>) -> String {
            v.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"))
        }
        let mut out = String::new();
        if !header_note.is_empty() {
            out.push_str(header_note);
            out.push('\n');
        }
        let count = |c: TaskCategory| self.category_counts.get(&c).copied().unwrap_or(0);
        out.push_str(&format!(
            "tasks: {} (gui_only {}, interaction {}, mcp {})\n",
            self.total,
            count(TaskCategory::GuiOnly),
            count(TaskCategory::Interaction),
            count(TaskCategory::Mcp),
        ));
        out.push_str(&format!(
            "{:<14} {:>8} {:>8} {:>8} {:>8}\n",
            "metric", "overall", "gui", "interact", "mcp"
        ));
        out.push_str(&format!(
            "{:<14} {:>8} {:>8} {:>8} {:>8}\n",
            "SR (%)",
            pct(Some(self.sr)),
            pct(self.sr_gui_only),
            pct(self.sr_interact),
            pct(self.sr_mcp),
        ));
        out.push_str(&format!("{:<14} {:>8.1}\n", "Ave. Steps", self.avg_steps));
        out.push_str(&format!("{:<14} {:>8}\n", "Ave. Queries", two(self.avg_queries)));
        out.push_str(&format!("{:<14} {:>8}\n", "UIQ", two(self.uiq)));
        out.push_str(&format!("{:<14} {:>8}\n", "Ave. MCP", two(self.avg_mcp_calls)));
        out.push_str(&format!("{:<14} {:>8}\n", "triggered", self.triggered_count));
        out
    }
}
