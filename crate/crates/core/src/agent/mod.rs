//! The planner-executor episode loop.
//!
//! A policy proposes one action per step from the goal, the interaction
//! history, and the current screenshot. Click-like actions carrying a
//! natural-language target are resolved to pixel coordinates by the policy's
//! grounding side before they reach the device; `ask_user`, `mcp_call`, and
//! the terminal actions are routed without touching the device at all.

pub mod prompt;

mod chat_policy;
mod scripted;

pub use chat_policy::ChatPolicy;
pub use scripted::{parse_script, ScriptedPolicy};

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::{Action, GestureTarget, ParseError, PlannerTurn, Point};
use crate::chat::EndpointError;
use crate::device::{DeviceState, Frame, StepOutcome};
use crate::mcp::{dispatch, Registry, ToolResult, ToolStatus, ToolTransport};
use crate::user_sim::{DialogueTurn, UserReply, UserSim};

/// Consecutive plan/parse/grounding failures tolerated before the episode
/// terminates as an agent failure.
pub const MAX_CONSECUTIVE_FAILURES: u32 = 3;

#[derive(Debug, Clone, Error)]
pub enum PolicyError {
    #[error("unparseable planner output: {0}")]
    Parse(#[from] ParseError),
    #[error("grounding failed for {desc:?}: {reason}")]
    Grounding { desc: String, reason: String },
    #[error("script exhausted")]
    ScriptExhausted,
    #[error(transparent)]
    Endpoint(#[from] EndpointError),
}

/// What the planner saw and received back for one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub screenshot_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_reply: Option<UserReply>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_result: Option<ToolResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_outcome: Option<StepOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub step_index: u32,
    pub thought: String,
    /// The action exactly as the planner emitted it.
    pub action: Action,
    /// The grounded form that reached the device, when it differs.
    pub resolved_action: Option<Action>,
    pub observation: Observation,
    pub warnings: Vec<String>,
    /// Wall time of the step; never persisted, traces must be byte-stable.
    pub duration: Duration,
}

/// Planner + grounding executor contract. One policy instance drives one
/// episode at a time.
pub trait AgentPolicy {
    fn plan(
        &mut self,
        goal: &str,
        history: &[HistoryEntry],
        frame: &Frame,
        retry_error: Option<&str>,
    ) -> Result<PlannerTurn, PolicyError>;

    fn ground(&mut self, target_desc: &str, frame: &Frame) -> Result<Point, PolicyError>;
}

/// Replaces natural-language targets with grounded coordinates; actions
/// without descriptions pass through unchanged. Out-of-bounds grounding is a
/// failure, never a dispatchable action.
pub fn resolve_target(
    policy: &mut dyn AgentPolicy,
    action: &Action,
    frame: &Frame,
    screen_dims: (u32, u32),
) -> Result<Action, PolicyError> {
    let mut ground = |target: &GestureTarget| -> Result<GestureTarget, PolicyError> {
        match target {
            GestureTarget::Point(p) => Ok(GestureTarget::Point(*p)),
            GestureTarget::Desc(desc) => {
                let p = policy.ground(desc, frame)?;
                if p.x >= screen_dims.0 || p.y >= screen_dims.1 {
                    return Err(PolicyError::Grounding {
                        desc: desc.clone(),
                        reason: format!("coordinate ({}, {}) is out of bounds", p.x, p.y),
                    });
                }
                Ok(GestureTarget::Point(p))
            }
        }
    };
    Ok(match action {
        Action::Click { target } => Action::Click { target: ground(target)? },
        Action::DoubleTap { target } => Action::DoubleTap { target: ground(target)? },
        Action::LongPress { target } => Action::LongPress { target: ground(target)? },
        Action::Drag { start, end } => Action::Drag { start: ground(start)?, end: ground(end)? },
        other => other.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Answered,
    StatusComplete,
    StatusInfeasible,
    BudgetExhausted,
    AgentFailure,
}

#[derive(Debug, Clone)]
pub struct EpisodeTrace {
    pub steps: Vec<HistoryEntry>,
    pub termination: Termination,
    /// Terminal `answer` text, when the episode ended that way.
    pub answer: Option<String>,
    /// The error that exhausted the retry budget, on agent failure.
    pub failure_detail: Option<String>,
    /// Set when the episode aborted on backend infrastructure rather than
    /// agent behavior (tool transport or user endpoint down).
    pub infrastructure_failure: Option<String>,
    /// Raw PNG per step for the artifact directory, keyed by step index.
    pub screenshots: Vec<(u32, Vec<u8>)>,
}

impl EpisodeTrace {
    pub fn len(&self) -> u32 {
        self.steps.len() as u32
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn ask_user_count(&self) -> u32 {
        self.steps.iter().filter(|s| matches!(s.action, Action::AskUser { .. })).count() as u32
    }

    pub fn mcp_call_count(&self) -> u32 {
        self.steps.iter().filter(|s| matches!(s.action, Action::McpCall { .. })).count() as u32
    }
}

/// The MCP stack an episode dispatches through.
pub struct McpSession<'a> {
    pub registry: &'a Registry,
    pub transport: &'a mut dyn ToolTransport,
    pub content_cap: usize,
}

/// Runs one episode to termination: at most `budget` planner turns, each
/// routed to exactly one of the device, the user simulator, the MCP layer,
/// or episode termination. Failures never escape; they classify the
/// termination reason instead.
pub fn run_episode(
    policy: &mut dyn AgentPolicy,
    device: &mut DeviceState,
    user: &UserSim,
    mcp: &mut McpSession,
    goal: &str,
    budget: u32,
) -> EpisodeTrace {
    let mut trace = EpisodeTrace {
        steps: Vec::new(),
        termination: Termination::BudgetExhausted,
        answer: None,
        failure_detail: None,
        infrastructure_failure: None,
        screenshots: Vec::new(),
    };
    let mut consecutive_failures = 0u32;
    let mut retry_error: Option<String> = None;

    loop {
        if trace.len() >= budget {
            trace.termination = Termination::BudgetExhausted;
            return trace;
        }
        let frame = device.render_frame();
        let started = Instant::now();

        let turn = match policy.plan(goal, &trace.steps, &frame, retry_error.as_deref()) {
            Ok(turn) => turn,
            Err(e) => {
                consecutive_failures += 1;
                if consecutive_failures >= MAX_CONSECUTIVE_FAILURES {
                    trace.failure_detail = Some(e.to_string());
                    trace.termination = Termination::AgentFailure;
                    return trace;
                }
                retry_error = Some(e.to_string());
                continue;
            }
        };

        let step_index = trace.len() + 1;
        let mut warnings = turn.warnings.clone();
        let mut observation = Observation {
            screenshot_digest: frame.digest.clone(),
            user_reply: None,
            tool_result: None,
            step_outcome: None,
        };
        let mut resolved_action = None;
        let mut termination = None;
        let mut infra: Option<String> = None;

        match &turn.action {
            Action::AskUser { text } => {
                let dialogue = collect_dialogue(&trace.steps);
                if dialogue.iter().any(|t| t.question == *text) {
                    warnings.push(format!("question repeated verbatim: {text:?}"));
                }
                match ask_with_retries(user, text, &dialogue) {
                    Ok(reply) => observation.user_reply = Some(reply),
                    Err(e) => {
                        infra = Some(format!("user endpoint failed: {e}"));
                        observation.user_reply = None;
                    }
                }
            }
            Action::McpCall { tool_name, params } => {
                let mut result = dispatch(mcp.registry, tool_name, params, mcp.transport, mcp.content_cap);
                for _ in 1..MAX_CONSECUTIVE_FAILURES {
                    if result.status != ToolStatus::TransportError {
                        break;
                    }
                    result = dispatch(mcp.registry, tool_name, params, mcp.transport, mcp.content_cap);
                }
                if result.status == ToolStatus::TransportError {
                    infra = Some(format!("tool transport failed: {}", result.content));
                }
                observation.tool_result = Some(result);
            }
            Action::Answer { text } => {
                trace.answer = Some(text.clone());
                termination = Some(Termination::Answered);
            }
            Action::Status { goal_status } => {
                termination = Some(match goal_status {
                    crate::actions::GoalStatus::Complete => Termination::StatusComplete,
                    crate::actions::GoalStatus::Infeasible => Termination::StatusInfeasible,
                });
            }
            gui => match resolve_target(policy, gui, &frame, device.screen_dims) {
                Ok(resolved) => {
                    let outcome = device.apply_action(&resolved);
                    observation.step_outcome = Some(outcome);
                    if resolved != *gui {
                        resolved_action = Some(resolved);
                    }
                }
                Err(e) => {
                    consecutive_failures += 1;
                    if consecutive_failures >= MAX_CONSECUTIVE_FAILURES {
                        trace.failure_detail = Some(e.to_string());
                        trace.termination = Termination::AgentFailure;
                        return trace;
                    }
                    retry_error = Some(e.to_string());
                    continue;
                }
            },
        }

        consecutive_failures = 0;
        retry_error = None;
        trace.screenshots.push((step_index, frame.png));
        trace.steps.push(HistoryEntry {
            step_index,
            thought: turn.thought,
            action: turn.action,
            resolved_action,
            observation,
            warnings,
            duration: started.elapsed(),
        });

        if let Some(reason) = infra {
            trace.infrastructure_failure = Some(reason.clone());
            trace.failure_detail = Some(reason);
            trace.termination = Termination::AgentFailure;
            return trace;
        }
        if let Some(t) = termination {
            trace.termination = t;
            return trace;
        }
    }
}

fn collect_dialogue(steps: &[HistoryEntry]) -> Vec<DialogueTurn> {
    steps
        .iter()
        .filter_map(|s| match (&s.action, &s.observation.user_reply) {
            (Action::AskUser { text }, Some(reply)) => {
                Some(DialogueTurn { question: text.clone(), reply: reply.text.clone() })
            }
            _ => None,
        })
        .collect()
}

fn ask_with_retries(user: &UserSim, question: &str, dialogue: &[DialogueTurn]) -> Result<UserReply, EndpointError> {
    let mut last = None;
    for _ in 0..MAX_CONSECUTIVE_FAILURES {
        match user.answer_query(question, dialogue) {
            Ok(reply) => return Ok(reply),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one attempt ran"))
}
