//! Line-delimited episode trace files.
//!
//! One JSON object per line: a header record (task id, snapshot digest,
//! budget, seed), one record per step with the action in canonical form,
//! and a footer with the termination reason and verdict. Identical episodes
//! serialize to byte-identical files; nothing wall-clock-dependent is
//! written.

use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{EpisodeTrace, Observation, Termination};
use crate::evaluators::Verdict;
use crate::metrics::TaskCategory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceRecord {
    Header {
        task_id: String,
        category: TaskCategory,
        snapshot_digest: String,
        budget: u32,
        seed: u64,
        policy: String,
    },
    Step {
        index: u32,
        #[serde(default, skip_serializing_if = "String::is_empty")]
        thought: String,
        action: serde_json::Value,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        resolved_action: Option<serde_json::Value>,
        observation: Observation,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        warnings: Vec<String>,
    },
    Footer {
        termination: Termination,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        answer: Option<String>,
        verdict: Verdict,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        infrastructure_failure: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        failure_detail: Option<String>,
    },
}

pub struct TraceHeader {
    pub task_id: String,
    pub category: TaskCategory,
    pub snapshot_digest: String,
    pub budget: u32,
    pub seed: u64,
    pub policy: String,
}

pub fn trace_records(header: TraceHeader, trace: &EpisodeTrace, verdict: &Verdict) -> Vec<TraceRecord> {
    let mut records = vec![TraceRecord::Header {
        task_id: header.task_id,
        category: header.category,
        snapshot_digest: header.snapshot_digest,
        budget: header.budget,
        seed: header.seed,
        policy: header.policy,
    }];
    for step in &trace.steps {
        records.push(TraceRecord::Step {
            index: step.step_index,
            thought: step.thought.clone(),
            action: step.action.to_canonical_json(),
            resolved_action: step.resolved_action.as_ref().map(|a| a.to_canonical_json()),
            observation: step.observation.clone(),
            warnings: step.warnings.clone(),
        });
    }
    records.push(TraceRecord::Footer {
        termination: trace.termination,
        answer: trace.answer.clone(),
        verdict: verdict.clone(),
        infrastructure_failure: trace.infrastructure_failure.clone(),
        failure_detail: trace.failure_detail.clone(),
    });
    records
}

pub fn write_trace(
    path: &Path,
    header: TraceHeader,
    trace: &EpisodeTrace,
    verdict: &Verdict,
) -> std::io::Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    for record in trace_records(header, trace, verdict) {
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_trace(path: &Path) -> std::io::Result<Vec<TraceRecord>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(std::io::Error::other))
        .collect()
}
