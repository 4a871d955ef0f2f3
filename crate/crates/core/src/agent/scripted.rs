//! Deterministic test-double policy that replays a fixed list of planner
//! turns, grounding target descriptions by exact element-text match against
//! the simulated screen.

use std::collections::VecDeque;

use crate::actions::{parse_planner_output, ParseError, PlannerTurn, Point};
use crate::device::Frame;

use super::{AgentPolicy, HistoryEntry, PolicyError};

/// Parses a scripted transcript: blank-line-separated turns in the planner
/// output format, `#` comment lines ignored.
///
/// ```text
/// # open the composer
/// Thought: start a new mail
/// Action: {"action_type":"click","target":"Compose"}
///
/// Action: {"action_type":"status","goal_status":"complete"}
/// ```
pub fn parse_script(text: &str) -> Result<Vec<PlannerTurn>, ParseError> {
    let mut turns = Vec::new();
    let mut block = String::new();
    for line in text.lines().chain(std::iter::once("")) {
        if line.trim_start().starts_with('#') {
            continue;
        }
        if line.trim().is_empty() {
            if !block.trim().is_empty() {
                turns.push(parse_planner_output(&block)?);
            }
            block.clear();
        } else {
            block.push_str(line);
            block.push('\n');
        }
    }
    Ok(turns)
}

pub struct ScriptedPolicy {
    turns: VecDeque<PlannerTurn>,
}

impl ScriptedPolicy {
    pub fn new(turns: Vec<PlannerTurn>) -> Self {
        Self { turns: turns.into() }
    }

    pub fn from_script(text: &str) -> Result<Self, ParseError> {
        Ok(Self::new(parse_script(text)?))
    }

    pub fn remaining(&self) -> usize {
        self.turns.len()
    }
}

impl AgentPolicy for ScriptedPolicy {
    fn plan(
        &mut self,
        _goal: &str,
        _history: &[HistoryEntry],
        _frame: &Frame,
        _retry_error: Option<&str>,
    ) -> Result<PlannerTurn, PolicyError> {
        self.turns.pop_front().ok_or(PolicyError::ScriptExhausted)
    }

    fn ground(&mut self, target_desc: &str, frame: &Frame) -> Result<Point, PolicyError> {
        frame
            .elements
            .iter()
            .find(|e| e.text == target_desc)
            .map(|e| e.center)
            .ok_or_else(|| PolicyError::Grounding {
                desc: target_desc.to_string(),
                reason: "no visible element with that exact text".to_string(),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actions::Action;

    #[test]
    fn scripts_split_on_blank_lines_and_skip_comments() {
        let text = "# a solution\nThought: open\nAction: {\"action_type\":\"click\",\"target\":\"Compose\"}\n\n\nAction: {\"action_type\":\"status\",\"goal_status\":\"complete\"}\n";
        let turns = parse_script(text).unwrap();
        assert_eq!(turns.len(), 2);
        assert_eq!(turns[0].thought, "open");
        assert!(matches!(turns[1].action, Action::Status { .. }));
    }

    #[test]
    fn bad_blocks_surface_parse_errors() {
        assert!(parse_script("Action: {\"action_type\":\"click\"}\n").is_err());
    }
}
