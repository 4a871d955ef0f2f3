//! Hybrid action space and the planner/grounder wire formats.
//!
//! The planner replies in free text containing a `Thought:` line and an
//! `Action:` line followed by a single JSON object; the grounding executor
//! replies with a JSON object inside a `<tool_call>` tag pair. Both parsers
//! are total: arbitrary input yields either a parsed value or a classified
//! [`ParseError`], never a panic.

use serde_json::{Map, Value};
use thiserror::Error;

/// Classified parse failures for planner and grounder output.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no JSON action block follows \"Action:\"")]
    NoActionBlock,
    #[error("unknown action_type {0:?}")]
    UnknownActionType(String),
    #[error("missing or invalid field {0:?}")]
    MissingField(&'static str),
    #[error("malformed JSON at byte {0}")]
    MalformedJson(usize),
    #[error("no <tool_call></tool_call> block in grounder output")]
    NoToolCallBlock,
    #[error("grounding coordinate is not a two-element array of non-negative integers")]
    BadCoordinateArity,
}

/// Screen point in integer pixels, origin at the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Point {
    pub x: u32,
    pub y: u32,
}

impl Point {
    pub fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }
}

/// Where a gesture lands: a natural-language description to be resolved by
/// the grounding executor, or raw pixel coordinates from a scripted agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GestureTarget {
    Desc(String),
    Point(Point),
}

impl GestureTarget {
    pub fn desc(s: impl Into<String>) -> Self {
        GestureTarget::Desc(s.into())
    }

    pub fn point(x: u32, y: u32) -> Self {
        GestureTarget::Point(Point::new(x, y))
    }

    pub fn as_point(&self) -> Option<Point> {
        match self {
            GestureTarget::Point(p) => Some(*p),
            GestureTarget::Desc(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScrollDirection {
    Up,
    Down,
    Left,
    Right,
}

impl ScrollDirection {
    pub fn as_str(self) -> &'static str {
        match self {
            ScrollDirection::Up => "up",
            ScrollDirection::Down => "down",
            ScrollDirection::Left => "left",
            ScrollDirection::Right => "right",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoalStatus {
    Complete,
    Infeasible,
}

impl GoalStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            GoalStatus::Complete => "complete",
            GoalStatus::Infeasible => "infeasible",
        }
    }
}

/// One action from the hybrid action space: GUI gestures, navigation,
/// task control, plus the `ask_user` and `mcp_call` extensions.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Click { target: GestureTarget },
    DoubleTap { target: GestureTarget },
    LongPress { target: GestureTarget },
    Drag { start: GestureTarget, end: GestureTarget },
    InputText { text: String },
    Scroll { direction: ScrollDirection },
    NavigateHome,
    NavigateBack,
    KeyboardEnter,
    Wait,
    Answer { text: String },
    Status { goal_status: GoalStatus },
    AskUser { text: String },
    McpCall { tool_name: String, params: Map<String, Value> },
}

/// Wire names of every accepted `action_type`, in declaration order.
pub const ACTION_KINDS: [&str; 14] = [
    "click",
    "double_tap",
    "long_press",
    "drag",
    "input_text",
    "scroll",
    "navigate_home",
    "navigate_back",
    "keyboard_enter",
    "wait",
    "answer",
    "status",
    "ask_user",
    "mcp",
];

impl Action {
    /// The `action_type` wire name.
    pub fn kind(&self) -> &'static str {
        match self {
            Action::Click { .. } => "click",
            Action::DoubleTap { .. } => "double_tap",
            Action::LongPress { .. } => "long_press",
            Action::Drag { .. } => "drag",
            Action::InputText { .. } => "input_text",
            Action::Scroll { .. } => "scroll",
            Action::NavigateHome => "navigate_home",
            Action::NavigateBack => "navigate_back",
            Action::KeyboardEnter => "keyboard_enter",
            Action::Wait => "wait",
            Action::Answer { .. } => "answer",
            Action::Status { .. } => "status",
            Action::AskUser { .. } => "ask_user",
            Action::McpCall { .. } => "mcp",
        }
    }

    /// Actions that end the episode on the spot.
    pub fn is_terminal(&self) -> bool {
        matches!(self, Action::Answer { .. } | Action::Status { .. })
    }

    /// Actions dispatched to the device (as opposed to the user, the MCP
    /// layer, or the episode loop).
    pub fn is_device_action(&self) -> bool {
        !matches!(
            self,
            Action::Answer { .. } | Action::Status { .. } | Action::AskUser { .. } | Action::McpCall { .. }
        )
    }

    /// Canonical JSON object for this action: deterministic key order, the
    /// exact shape accepted back by [`parse_planner_output`]. This is the
    /// format that appears verbatim in trace files.
    pub fn to_canonical_json(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("action_type".into(), Value::String(self.kind().into()));
        match self {
            Action::Click { target } | Action::DoubleTap { target } | Action::LongPress { target } => {
                insert_target(&mut obj, target, "target", "x", "y");
            }
            Action::Drag { start, end } => {
                insert_target(&mut obj, start, "target_start", "start_x", "start_y");
                insert_target(&mut obj, end, "target_end", "end_x", "end_y");
            }
            Action::InputText { text } | Action::Answer { text } | Action::AskUser { text } => {
                obj.insert("text".into(), Value::String(text.clone()));
            }
            Action::Scroll { direction } => {
                obj.insert("direction".into(), Value::String(direction.as_str().into()));
            }
            Action::Status { goal_status } => {
                obj.insert("goal_status".into(), Value::String(goal_status.as_str().into()));
            }
            Action::McpCall { tool_name, params } => {
                obj.insert("action_name".into(), Value::String(tool_name.clone()));
                obj.insert("action_json".into(), Value::Object(params.clone()));
            }
            Action::NavigateHome | Action::NavigateBack | Action::KeyboardEnter | Action::Wait => {}
        }
        Value::Object(obj)
    }

    /// Builds an action from a decoded wire object. Returns the action plus
    /// warnings for any unrecognized keys, which are ignored rather than
    /// rejected (model outputs drift).
    pub fn from_wire_object(obj: &Map<String, Value>) -> Result<(Action, Vec<String>), ParseError> {
        let kind = obj
            .get("action_type")
            .and_then(Value::as_str)
            .ok_or(ParseError::MissingField("action_type"))?;

        let mut consumed: Vec<&str> = vec!["action_type"];
        let action = match kind {
            "click" => Action::Click { target: read_target(obj, &mut consumed, "target", "x", "y")? },
            "double_tap" => Action::DoubleTap { target: read_target(obj, &mut consumed, "target", "x", "y")? },
            "long_press" => Action::LongPress { target: read_target(obj, &mut consumed, "target", "x", "y")? },
            "drag" => Action::Drag {
                start: read_target(obj, &mut consumed, "target_start", "start_x", "start_y")?,
                end: read_target(obj, &mut consumed, "target_end", "end_x", "end_y")?,
            },
            "input_text" => Action::InputText { text: read_text(obj, &mut consumed)? },
            "scroll" => {
                consumed.push("direction");
                let dir = obj
                    .get("direction")
                    .and_then(Value::as_str)
                    .ok_or(ParseError::MissingField("direction"))?;
                let direction = match dir {
                    "up" => ScrollDirection::Up,
                    "down" => ScrollDirection::Down,
                    "left" => ScrollDirection::Left,
                    "right" => ScrollDirection::Right,
                    _ => return Err(ParseError::MissingField("direction")),
                };
                Action::Scroll { direction }
            }
            "navigate_home" => Action::NavigateHome,
            "navigate_back" => Action::NavigateBack,
            "keyboard_enter" => Action::KeyboardEnter,
            "wait" => Action::Wait,
            "answer" => Action::Answer { text: read_text(obj, &mut consumed)? },
            "status" => {
                consumed.push("goal_status");
                let status = obj
                    .get("goal_status")
                    .and_then(Value::as_str)
                    .ok_or(ParseError::MissingField("goal_status"))?;
                let goal_status = match status {
                    "complete" => GoalStatus::Complete,
                    "infeasible" => GoalStatus::Infeasible,
                    _ => return Err(ParseError::MissingField("goal_status")),
                };
                Action::Status { goal_status }
            }
            "ask_user" => Action::AskUser { text: read_text(obj, &mut consumed)? },
            "mcp" => {
                consumed.push("action_name");
                consumed.push("action_json");
                let tool_name = obj
                    .get("action_name")
                    .and_then(Value::as_str)
                    .ok_or(ParseError::MissingField("action_name"))?
                    .to_string();
                let params = obj
                    .get("action_json")
                    .and_then(Value::as_object)
                    .ok_or(ParseError::MissingField("action_json"))?
                    .clone();
                Action::McpCall { tool_name, params }
            }
            other => return Err(ParseError::UnknownActionType(other.to_string())),
        };

        let warnings = obj
            .keys()
            .filter(|k| !consumed.contains(&k.as_str()))
            .map(|k| format!("ignored unknown key {k:?}"))
            .collect();
        Ok((action, warnings))
    }
}

fn insert_target(obj: &mut Map<String, Value>, target: &GestureTarget, desc_key: &str, x_key: &str, y_key: &str) {
    match target {
        GestureTarget::Desc(d) => {
            obj.insert(desc_key.into(), Value::String(d.clone()));
        }
        GestureTarget::Point(p) => {
            obj.insert(x_key.into(), Value::from(p.x));
            obj.insert(y_key.into(), Value::from(p.y));
        }
    }
}

fn read_text(obj: &Map<String, Value>, consumed: &mut Vec<&str>) -> Result<String, ParseError> {
    consumed.push("text");
    obj.get("text")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or(ParseError::MissingField("text"))
}

fn read_target(
    obj: &Map<String, Value>,
    consumed: &mut Vec<&'static str>,
    desc_key: &'static str,
    x_key: &'static str,
    y_key: &'static str,
) -> Result<GestureTarget, ParseError> {
    if let Some(v) = obj.get(desc_key) {
        consumed.push(desc_key);
        let desc = v.as_str().ok_or(ParseError::MissingField(desc_key))?;
        return Ok(GestureTarget::Desc(desc.to_string()));
    }
    if obj.contains_key(x_key) || obj.contains_key(y_key) {
        consumed.push(x_key);
        consumed.push(y_key);
        let x = read_pixel(obj, x_key)?;
        let y = read_pixel(obj, y_key)?;
        return Ok(GestureTarget::Point(Point::new(x, y)));
    }
    Err(ParseError::MissingField(desc_key))
}

fn read_pixel(obj: &Map<String, Value>, key: &'static str) -> Result<u32, ParseError> {
    obj.get(key)
        .and_then(Value::as_u64)
        .and_then(|n| u32::try_from(n).ok())
        .ok_or(ParseError::MissingField(key))
}

/// One parsed planner turn: the free-text thought, the decoded action, and
/// the unmodified model output it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannerTurn {
    pub thought: String,
    pub action: Action,
    pub raw: String,
    pub warnings: Vec<String>,
}

/// Parses raw planner output: an optional `Thought:` line and the first JSON
/// object following `Action:`. Trailing text after the object is ignored;
/// extra `Action:` blocks are recorded as a warning.
pub fn parse_planner_output(raw: &str) -> Result<PlannerTurn, ParseError> {
    let action_pos = raw.find("Action:").ok_or(ParseError::NoActionBlock)?;

    let thought = match raw.find("Thought:") {
        Some(tp) if tp < action_pos => raw[tp + "Thought:".len()..action_pos].trim().to_string(),
        _ => String::new(),
    };

    let after = &raw[action_pos + "Action:".len()..];
    let brace = after.find('{').ok_or(ParseError::NoActionBlock)?;
    let obj_start = action_pos + "Action:".len() + brace;
    let obj_src = extract_balanced_object(raw, obj_start)?;

    let value: Value = serde_json::from_str(obj_src).map_err(|e| {
        let offset = if e.line() <= 1 { e.column().saturating_sub(1) } else { 0 };
        ParseError::MalformedJson(obj_start + offset)
    })?;
    let obj = value.as_object().ok_or(ParseError::MalformedJson(obj_start))?;

    let (action, mut warnings) = Action::from_wire_object(obj)?;
    if raw[obj_start + obj_src.len()..].contains("Action:") {
        warnings.push("multiple Action blocks in one turn; only the first was used".to_string());
    }

    Ok(PlannerTurn { thought, action, raw: raw.to_string(), warnings })
}

/// Parses grounding-executor output: the JSON object inside the
/// `<tool_call></tool_call>` tag pair, returning its two-element pixel
/// coordinate.
pub fn parse_grounder_output(raw: &str) -> Result<Point, ParseError> {
    let open = raw.find("<tool_call>").ok_or(ParseError::NoToolCallBlock)?;
    let body_start = open + "<tool_call>".len();
    let close = raw[body_start..].find("</tool_call>").ok_or(ParseError::NoToolCallBlock)?;
    let inner = &raw[body_start..body_start + close];

    let brace = inner.find('{').ok_or(ParseError::NoToolCallBlock)?;
    let obj_src = extract_balanced_object(inner, brace)?;
    let value: Value = serde_json::from_str(obj_src).map_err(|e| {
        let offset = if e.line() <= 1 { e.column().saturating_sub(1) } else { 0 };
        ParseError::MalformedJson(body_start + brace + offset)
    })?;

    let args = value
        .get("arguments")
        .and_then(Value::as_object)
        .ok_or(ParseError::MissingField("arguments"))?;
    let coord = args.get("coordinate").ok_or(ParseError::MissingField("coordinate"))?;
    let arr = coord.as_array().ok_or(ParseError::BadCoordinateArity)?;
    if arr.len() != 2 {
        return Err(ParseError::BadCoordinateArity);
    }
    let x = arr[0].as_u64().and_then(|n| u32::try_from(n).ok()).ok_or(ParseError::BadCoordinateArity)?;
    let y = arr[1].as_u64().and_then(|n| u32::try_from(n).ok()).ok_or(ParseError::BadCoordinateArity)?;
    Ok(Point::new(x, y))
}

/// Canonical key-ordered JSON text for an action; round-trips through
/// [`parse_planner_output`] for every kind.
pub fn serialize_action(action: &Action) -> String {
    serde_json::to_string(&action.to_canonical_json()).expect("action serialization cannot fail")
}

/// Extracts the balanced `{...}` object starting at `start`, honoring JSON
/// string literals and escapes. Regex cannot do this for nested objects in
/// `action_json`.
fn extract_balanced_object(s: &str, start: usize) -> Result<&str, ParseError> {
    debug_assert_eq!(s.as_bytes().get(start), Some(&b'{'));
    let bytes = s.as_bytes();
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_str {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_str = false;
            }
            continue;
        }
        match b {
            b'"' => in_str = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Ok(&s[start..=i]);
                }
            }
            _ => {}
        }
    }
    Err(ParseError::MalformedJson(start))
}
