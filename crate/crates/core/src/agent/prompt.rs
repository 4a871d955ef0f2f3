//! Planner and grounding-executor prompt assembly.
//!
//! The planner system prompt carries the action framework, execution
//! principles, output format, the MCP tool block for the task (when any
//! tools are allowed), and the user goal. History is replayed as alternating
//! user/assistant turns with one screenshot reference per step; policies
//! substitute real pixels for the most recent references.

use crate::chat::{ChatMessage, ContentPart, Role};
use crate::device::Frame;
use crate::mcp::ToolStatus;

use super::HistoryEntry;

const PLANNER_HEADER: &str = r#"## Role: Android Phone Operator AI

You are an AI that controls an Android phone to complete user requests. Your responsibilities:
- Answer questions by retrieving information from the phone.
- Perform tasks by executing precise actions.

## Action Framework

Respond with EXACT JSON format for one of these actions:
- click — Tap a visible element (describe it clearly): {"action_type": "click", "target": "blue circle button at top-right"}
- double_tap — Double-tap a visible element: {"action_type": "double_tap", "target": "blue circle button at top-right"}
- long_press — Long-press a visible element: {"action_type": "long_press", "target": "message from John"}
- drag — Drag from one visible element to another (describe both): {"action_type": "drag", "target_start": "the start point", "target_end": "the end point"}
- input_text — Type into the focused field: {"action_type": "input_text", "text": "Hello"}
- answer — Respond to the user: {"action_type": "answer", "text": "It's 25 degrees today."}
- navigate_home — Return to the home screen: {"action_type": "navigate_home"}
- navigate_back — Navigate back: {"action_type": "navigate_back"}
- scroll — Scroll in a direction (up/down/left/right): {"action_type": "scroll", "direction": "down"}
- status — Mark the task as complete or infeasible: {"action_type": "status", "goal_status": "complete"}
- wait — Wait for the screen to update: {"action_type": "wait"}
- ask_user — Ask the user for information: {"action_type": "ask_user", "text": "what is the exact requirement?"}
- keyboard_enter — Press the enter key: {"action_type": "keyboard_enter"}

## Execution Principles

1. Communication Rule:
   - ALWAYS use the answer action to reply to the user - never assume on-screen text is sufficient.
   - Follow the user instruction strictly when answering, e.g. only return a single number, only return True/False, only return items separated by comma.
   - NEVER use the answer action to indicate waiting or loading - use the wait action instead.
   - Note that answer will terminate the task immediately.
2. Efficiency First:
   - Choose the simplest path to complete the task.
   - If an action fails twice, try alternatives (e.g. long_press instead of click).
3. Smart Navigation:
   - Gather information when needed (e.g. open Calendar to check the schedule).
   - Scroll direction is INVERSE to swipe: scroll down to see lower content. If a scroll fails, try the opposite direction.
4. Text Operations:
   - You MUST first click the input box to activate it before typing the text.
5. Ask User:
   - If you do not have enough information to complete the task, use the ask_user action to get more information from the user.

## Decision Process

1. Analyze the goal, the history, and the current screen.
2. Determine whether the task is already complete (use status if so).
3. Otherwise choose the single most appropriate next action.
4. Output in the exact format below, and ensure the Action is a valid JSON string.
5. The action output format differs between GUI actions and MCP tool actions. Note only one tool call is allowed in one action.

## Expected Output Format

Thought: and Action: are required.

Thought: [Analysis including reference to key steps/points when applicable]
Action: [Single JSON action]

## Output Format Example

for GUI actions:
Thought: I need to tap the search bar to start the query.
Action: {"action_type": "click", "target": "search bar at the top"}

for MCP tools:
Thought: I need to use the provided mcp tool to get the information.
Action: {"action_type": "mcp", "action_json": {"address": "Tianjin"}, "action_name": "maps_geo"}"#;

pub const GROUNDING_SYSTEM_PROMPT: &str = r#"You are a GUI agent. You are given a task and your action history, with screenshots. You need to perform the next action to complete the task.

## Output Format

Return a json object with function name and arguments within <tool_call></tool_call> XML tags:

<tool_call>
{"name": "grounding", "arguments": <args-json-object>}
</tool_call>

<args-json-object> represents the following item of the action space:

## Action Space

{"action": "click", "coordinate": [x, y]}"#;

/// Renders the planner system prompt. The MCP tool section appears only when
/// a tool block is supplied.
pub fn planner_system_prompt(goal: &str, tool_block: &str) -> String {
    let mut prompt = String::from(PLANNER_HEADER);
    if !tool_block.is_empty() {
        prompt.push_str("\n\n## Available MCP Tools\n\n");
        prompt.push_str(tool_block);
    }
    prompt.push_str("\n\n## User Goal\n\n");
    prompt.push_str(goal);
    prompt
}

/// The textual observation delivered for a completed step: the user reply,
/// tool result, or device outcome the action produced.
pub fn result_text(entry: &HistoryEntry) -> Option<String> {
    if let Some(reply) = &entry.observation.user_reply {
        return Some(format!("User replied: {}", reply.text));
    }
    if let Some(result) = &entry.observation.tool_result {
        let status = match result.status {
            ToolStatus::Ok => "ok",
            ToolStatus::ToolError => "tool_error",
            ToolStatus::TransportError => "transport_error",
        };
        return Some(format!("Tool result ({status}): {}", result.content));
    }
    if let Some(outcome) = &entry.observation.step_outcome {
        return Some(match outcome {
            crate::device::StepOutcome::Applied => "Action applied.".to_string(),
            crate::device::StepOutcome::Rejected(reason) => format!("Action rejected: {reason}"),
        });
    }
    None
}

/// Deterministic message sequence for a planner call: system prompt, then
/// the history as alternating user observations and assistant turns.
pub fn build_planner_prompt(goal: &str, tool_block: &str, history: &[HistoryEntry]) -> Vec<ChatMessage> {
    let mut messages = vec![ChatMessage::text(Role::System, planner_system_prompt(goal, tool_block))];
    for (i, entry) in history.iter().enumerate() {
        let mut parts = Vec::new();
        if i > 0 {
            if let Some(text) = result_text(&history[i - 1]) {
                parts.push(ContentPart::Text(format!("Result of step {}: {text}\n", i)));
            }
        }
        parts.push(ContentPart::Text(format!("Observation (step {}): ", entry.step_index)));
        parts.push(ContentPart::ScreenshotRef(entry.observation.screenshot_digest.clone()));
        messages.push(ChatMessage { role: Role::User, parts });
        messages.push(ChatMessage::text(
            Role::Assistant,
            format!("Thought: {}\nAction: {}", entry.thought, crate::actions::serialize_action(&entry.action)),
        ));
    }
    messages
}

/// The final user message for the current planning step: the result of the
/// last action, the fresh screenshot, and any parse error being retried.
pub fn current_observation_message(history: &[HistoryEntry], frame: &Frame, retry_error: Option<&str>) -> ChatMessage {
    let mut parts = Vec::new();
    if let Some(last) = history.last() {
        if let Some(text) = result_text(last) {
            parts.push(ContentPart::Text(format!("Result of step {}: {text}\n", last.step_index)));
        }
    }
    parts.push(ContentPart::Text(format!("Current screen (step {}): ", history.len() + 1)));
    parts.push(ContentPart::ImagePng(frame.png.clone()));
    if let Some(err) = retry_error {
        parts.push(ContentPart::Text(format!(
            "\nYour previous reply could not be executed: {err}. Reply again in the exact output format."
        )));
    }
    ChatMessage { role: Role::User, parts }
}

/// User message for one grounding call: the element description plus the
/// current screenshot.
pub fn grounding_user_message(target_desc: &str, frame: &Frame) -> ChatMessage {
    ChatMessage {
        role: Role::User,
        parts: vec![
            ContentPart::Text(format!("Click the element described as: {target_desc}\n")),
            ContentPart::ImagePng(frame.png.clone()),
        ],
    }
}
