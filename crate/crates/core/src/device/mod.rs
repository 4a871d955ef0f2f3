//! In-memory simulated phone with snapshot lifecycle.
//!
//! Apps are data-driven: screens, elements, and transition rules come from
//! fixture files, so tasks can ship their own mini-apps. One `DeviceState`
//! is owned by exactly one episode at a time; independent instances may run
//! concurrently.

mod fixture;
mod font;
mod render;
pub mod transport;

pub use fixture::{load_world, FixtureError};
pub use render::{Frame, VisibleElement};

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::actions::{Action, GestureTarget, Point, ScrollDirection};
use crate::predicate::Predicate;

pub const SNAPSHOT_MAGIC: &[u8] = b"MWSNAP1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DeviceError {
    #[error("unknown store {0:?}")]
    UnknownStore(String),
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
}

/// Frozen per-episode wall clock, injected into screenshots and the user
/// simulator. No action can change it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceClock {
    pub date: String,
    pub weekday: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenRef {
    pub app: String,
    pub screen: String,
}

impl ScreenRef {
    pub fn new(app: impl Into<String>, screen: impl Into<String>) -> Self {
        Self { app: app.into(), screen: screen.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementRole {
    Button,
    TextField,
    ListItem,
    Label,
}

/// Axis-aligned rectangle in pixels: `[x, y, w, h]` in fixture files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "(u32, u32, u32, u32)", into = "(u32, u32, u32, u32)")]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl From<(u32, u32, u32, u32)> for Rect {
    fn from((x, y, w, h): (u32, u32, u32, u32)) -> Self {
        Rect { x, y, w, h }
    }
}

impl From<Rect> for (u32, u32, u32, u32) {
    fn from(r: Rect) -> Self {
        (r.x, r.y, r.w, r.h)
    }
}

impl Rect {
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x && p.y >= self.y && p.x < self.x + self.w && p.y < self.y + self.h
    }

    pub fn center(&self) -> Point {
        Point::new(self.x + self.w / 2, self.y + self.h / 2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UiElement {
    pub id: String,
    pub bbox: Rect,
    #[serde(default)]
    pub text: String,
    pub role: ElementRole,
    /// Inclusive scroll-offset band in which the element is drawn and
    /// hit-testable. Absent means visible at every offset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visible_at_offset: Option<(u32, u32)>,
}

impl UiElement {
    pub fn visible_at(&self, offset: u32) -> bool {
        match self.visible_at_offset {
            None => true,
            Some((lo, hi)) => offset >= lo && offset <= hi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerKind {
    Click,
    DoubleTap,
    LongPress,
    Drag,
    KeyboardEnter,
    NavigateBack,
}

/// A transition rule: when `kind` fires on `element` (or element-free for
/// `navigate_back`) while `screen` is foreground, run `effects` in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRule {
    pub screen: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element: Option<String>,
    pub kind: TriggerKind,
    /// For drag rules: the element the gesture must end on, if constrained.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_element: Option<String>,
    pub effects: Vec<Effect>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Effect {
    /// Bring a screen to the foreground; `app` defaults to the current app.
    Goto {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        app: Option<String>,
        screen: String,
    },
    Focus { element: String },
    ClearFocus,
    SetField { element: String, value: String },
    /// Flip a field buffer between two values (e.g. an on/off switch).
    ToggleField { element: String, on: String, off: String },
    /// Reset every field buffer of a screen (defaults to the rule's screen).
    ClearFields {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        screen: Option<String>,
    },
    AppendRow { store: String, row: Map<String, Value> },
    UpdateRows {
        store: String,
        #[serde(rename = "where")]
        filter: Predicate,
        set: Map<String, Value>,
    },
    DeleteRows {
        store: String,
        #[serde(rename = "where")]
        filter: Predicate,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppModel {
    /// screen id → elements in draw order (later elements draw on top).
    pub screens: BTreeMap<String, Vec<UiElement>>,
    pub transitions: Vec<TransitionRule>,
    /// screen id → current scroll offset.
    #[serde(default)]
    pub scroll_offsets: BTreeMap<String, u32>,
    /// "screen/element" → typed text buffer for text fields and switches.
    #[serde(default)]
    pub field_contents: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum StoreKind {
    Contacts,
    Emails,
    CalendarEvents,
    Sms,
    Files,
    Posts,
    ChatMessages,
    CartItems,
    Alarms,
    CallbackEvents,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataStore {
    pub kind: StoreKind,
    pub rows: Vec<Map<String, Value>>,
    /// Monotonic counter for primary-key assignment.
    #[serde(default)]
    pub next_id: u64,
}

impl DataStore {
    pub fn new(kind: StoreKind) -> Self {
        Self { kind, rows: Vec::new(), next_id: 1 }
    }
}

/// What happened when an action hit the device. Impossible gestures are
/// rejected with a reason rather than raised as errors, matching real
/// devices that silently ignore taps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepOutcome {
    Applied,
    Rejected(String),
}

impl StepOutcome {
    fn rejected(reason: impl Into<String>) -> Self {
        StepOutcome::Rejected(reason.into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceState {
    pub screen_dims: (u32, u32),
    pub clock: DeviceClock,
    pub home: ScreenRef,
    pub foreground: ScreenRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focused_field: Option<String>,
    #[serde(default)]
    pub clipboard: String,
    pub apps: BTreeMap<String, AppModel>,
    pub stores: BTreeMap<String, DataStore>,
}

/// Serialized complete device state. The payload is a pure function of the
/// state; `created_at` is bookkeeping and not part of the digest.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub id: String,
    pub digest: String,
    pub payload: Vec<u8>,
    pub created_at: DateTime<Utc>,
}

impl DeviceState {
    /// Canonical payload bytes: versioned magic header plus key-ordered JSON.
    pub fn canonical_payload(&self) -> Vec<u8> {
        let mut payload = SNAPSHOT_MAGIC.to_vec();
        payload.extend_from_slice(&serde_json::to_vec(self).expect("device state serialization cannot fail"));
        payload
    }

    /// Hex SHA-256 of the canonical payload.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_payload()))
    }

    pub fn capture_snapshot(&self) -> Snapshot {
        let payload = self.canonical_payload();
        let digest = hex::encode(Sha256::digest(&payload));
        Snapshot { id: format!("snap-{}", &digest[..12]), digest, payload, created_at: Utc::now() }
    }

    pub fn restore_snapshot(snap: &Snapshot) -> Result<DeviceState, DeviceError> {
        let actual = hex::encode(Sha256::digest(&snap.payload));
        if actual != snap.digest {
            return Err(DeviceError::CorruptSnapshot(format!(
                "digest mismatch: payload hashes to {actual}, snapshot claims {}",
                snap.digest
            )));
        }
        let body = snap
            .payload
            .strip_prefix(SNAPSHOT_MAGIC)
            .ok_or_else(|| DeviceError::CorruptSnapshot("missing MWSNAP1 header".into()))?;
        serde_json::from_slice(body).map_err(|e| DeviceError::CorruptSnapshot(e.to_string()))
    }

    fn app(&self, id: &str) -> &AppModel {
        &self.apps[id]
    }

    pub fn foreground_elements(&self) -> &[UiElement] {
        &self.app(&self.foreground.app).screens[&self.foreground.screen]
    }

    pub fn foreground_offset(&self) -> u32 {
        self.app(&self.foreground.app)
            .scroll_offsets
            .get(&self.foreground.screen)
            .copied()
            .unwrap_or(0)
    }

    /// Visible elements of the foreground screen in draw order.
    pub fn visible_elements(&self) -> Vec<&UiElement> {
        let offset = self.foreground_offset();
        self.foreground_elements().iter().filter(|e| e.visible_at(offset)).collect()
    }

    /// Topmost visible element whose bbox contains the point. Later elements
    /// in the fixture list win ties, matching last-drawn-wins rendering.
    pub fn hit_test(&self, p: Point) -> Option<&UiElement> {
        self.visible_elements().into_iter().rev().find(|e| e.bbox.contains(p))
    }

    pub fn field_content(&self, screen: &str, element: &str) -> &str {
        self.app(&self.foreground.app)
            .field_contents
            .get(&field_key(screen, element))
            .map(String::as_str)
            .unwrap_or("")
    }

    /// Runs a read-only predicate query against a store.
    pub fn exec_query(&self, store_id: &str, predicate: &Predicate) -> Result<Vec<Map<String, Value>>, DeviceError> {
        let store = self.stores.get(store_id).ok_or_else(|| DeviceError::UnknownStore(store_id.into()))?;
        Ok(store
            .rows
            .iter()
            .filter(|row| predicate.matches(&Value::Object((*row).clone())))
            .cloned()
            .collect())
    }

    /// Applies a device-bound action with resolved coordinates. Terminal and
    /// routed actions (`answer`, `status`, `ask_user`, `mcp_call`) never
    /// reach the device.
    pub fn apply_action(&mut self, action: &Action) -> StepOutcome {
        let outcome = self.apply_inner(action);
        debug_assert_eq!(self.validate(), Ok(()), "action {action:?} broke a device invariant");
        outcome
    }

    fn apply_inner(&mut self, action: &Action) -> StepOutcome {
        match action {
            Action::Click { target } => self.gesture(target, TriggerKind::Click),
            Action::DoubleTap { target } => self.gesture(target, TriggerKind::DoubleTap),
            Action::LongPress { target } => self.gesture(target, TriggerKind::LongPress),
            Action::Drag { start, end } => self.drag(start, end),
            Action::InputText { text } => self.input_text(text),
            Action::Scroll { direction } => self.scroll(*direction),
            Action::NavigateHome => {
                self.foreground = self.home.clone();
                self.focused_field = None;
                StepOutcome::Applied
            }
            Action::NavigateBack => match self.find_rule(TriggerKind::NavigateBack, None, None) {
                Some(rule) => self.run_effects(rule),
                None => StepOutcome::rejected("nowhere to go back"),
            },
            Action::KeyboardEnter => {
                let focused = self.focused_field.clone();
                match self
                    .find_rule(TriggerKind::KeyboardEnter, focused.as_deref(), None)
                    .or_else(|| self.find_rule(TriggerKind::KeyboardEnter, None, None))
                {
                    Some(rule) => self.run_effects(rule),
                    None => StepOutcome::rejected("enter had no effect"),
                }
            }
            Action::Wait => StepOutcome::Applied,
            Action::Answer { .. } | Action::Status { .. } | Action::AskUser { .. } | Action::McpCall { .. } => {
                StepOutcome::rejected("not a device action")
            }
        }
    }

    fn point_of(&self, target: &GestureTarget) -> Result<Point, StepOutcome> {
        let Some(p) = target.as_point() else {
            return Err(StepOutcome::rejected("unresolved target description"));
        };
        let (w, h) = self.screen_dims;
        if p.x >= w || p.y >= h {
            return Err(StepOutcome::rejected(format!("point ({}, {}) outside {w}x{h} screen", p.x, p.y)));
        }
        Ok(p)
    }

    fn gesture(&mut self, target: &GestureTarget, kind: TriggerKind) -> StepOutcome {
        let p = match self.point_of(target) {
            Ok(p) => p,
            Err(out) => return out,
        };
        let Some(element) = self.hit_test(p) else {
            return StepOutcome::rejected(format!("no element at ({}, {})", p.x, p.y));
        };
        let element_id = element.id.clone();
        let is_text_field = element.role == ElementRole::TextField;

        if let Some(rule) = self.find_rule(kind, Some(&element_id), None) {
            return self.run_effects(rule);
        }
        // Tapping a text field focuses it even without an explicit rule.
        if kind == TriggerKind::Click && is_text_field {
            self.focused_field = Some(element_id);
            return StepOutcome::Applied;
        }
        StepOutcome::rejected(format!("no effect for element {element_id:?}"))
    }

    fn drag(&mut self, start: &GestureTarget, end: &GestureTarget) -> StepOutcome {
        let start_p = match self.point_of(start) {
            Ok(p) => p,
            Err(out) => return out,
        };
        let end_p = match self.point_of(end) {
            Ok(p) => p,
            Err(out) => return out,
        };
        let Some(start_el) = self.hit_test(start_p) else {
            return StepOutcome::rejected(format!("no element at ({}, {})", start_p.x, start_p.y));
        };
        let start_id = start_el.id.clone();
        let end_id = self.hit_test(end_p).map(|e| e.id.clone());
        match self.find_rule(TriggerKind::Drag, Some(&start_id), Some(end_id.as_deref())) {
            Some(rule) => self.run_effects(rule),
            None => StepOutcome::rejected(format!("no drag rule for element {start_id:?}")),
        }
    }

    fn input_text(&mut self, text: &str) -> StepOutcome {
        let Some(focused) = self.focused_field.clone() else {
            return StepOutcome::rejected("no focused input");
        };
        let key = field_key(&self.foreground.screen, &focused);
        let app = self.apps.get_mut(&self.foreground.app).expect("foreground app exists");
        app.field_contents.entry(key).or_default().push_str(text);
        StepOutcome::Applied
    }

    fn scroll(&mut self, direction: ScrollDirection) -> StepOutcome {
        // Scroll direction is inverse to swipe: scrolling down reveals lower
        // content by increasing the offset.
        let max_offset = self
            .foreground_elements()
            .iter()
            .filter_map(|e| e.visible_at_offset.map(|(lo, _)| lo))
            .max()
            .unwrap_or(0);
        let screen = self.foreground.screen.clone();
        let app = self.apps.get_mut(&self.foreground.app).expect("foreground app exists");
        let offset = app.scroll_offsets.entry(screen).or_insert(0);
        match direction {
            ScrollDirection::Down if *offset < max_offset => {
                *offset += 1;
                StepOutcome::Applied
            }
            ScrollDirection::Up if *offset > 0 => {
                *offset -= 1;
                StepOutcome::Applied
            }
            ScrollDirection::Down => StepOutcome::rejected("already at the end"),
            ScrollDirection::Up => StepOutcome::rejected("already at the top"),
            ScrollDirection::Left | ScrollDirection::Right => StepOutcome::rejected("no horizontal content"),
        }
    }

    /// First declared rule matching (foreground screen, element, kind); drag
    /// rules may additionally constrain the end element.
    fn find_rule(&self, kind: TriggerKind, element: Option<&str>, drag_end: Option<Option<&str>>) -> Option<TransitionRule> {
        self.app(&self.foreground.app)
            .transitions
            .iter()
            .find(|r| {
                r.kind == kind
                    && r.screen == self.foreground.screen
                    && r.element.as_deref() == element
                    && match (&r.end_element, drag_end) {
                        (None, _) => true,
                        (Some(want), Some(actual)) => actual == Some(want.as_str()),
                        (Some(_), None) => false,
                    }
            })
            .cloned()
    }

    fn run_effects(&mut self, rule: TransitionRule) -> StepOutcome {
        let rule_screen = rule.screen.clone();
        for effect in &rule.effects {
            self.run_effect(effect, &rule_screen);
        }
        StepOutcome::Applied
    }

    fn run_effect(&mut self, effect: &Effect, rule_screen: &str) {
        match effect {
            Effect::Goto { app, screen } => {
                let app_id = app.clone().unwrap_or_else(|| self.foreground.app.clone());
                let changed = self.foreground.app != app_id || self.foreground.screen != *screen;
                self.foreground = ScreenRef::new(app_id, screen.clone());
                if changed {
                    self.focused_field = None;
                }
            }
            Effect::Focus { element } => self.focused_field = Some(element.clone()),
            Effect::ClearFocus => self.focused_field = None,
            Effect::SetField { element, value } => {
                let key = field_key(rule_screen, element);
                let app = self.apps.get_mut(&self.foreground.app).expect("foreground app exists");
                app.field_contents.insert(key, value.clone());
            }
            Effect::ToggleField { element, on, off } => {
                let key = field_key(rule_screen, element);
                let app = self.apps.get_mut(&self.foreground.app).expect("foreground app exists");
                let slot = app.field_contents.entry(key).or_insert_with(|| on.clone());
                *slot = if slot == on { off.clone() } else { on.clone() };
            }
            Effect::ClearFields { screen } => {
                let target = screen.clone().unwrap_or_else(|| rule_screen.to_string());
                let prefix = format!("{target}/");
                let app = self.apps.get_mut(&self.foreground.app).expect("foreground app exists");
                app.field_contents.retain(|k, _| !k.starts_with(&prefix));
            }
            Effect::AppendRow { store, row } => {
                let resolved = self.resolve_row(row, rule_screen);
                let store = self.stores.get_mut(store).expect("fixture-validated store");
                let mut resolved = resolved;
                if !resolved.contains_key("id") {
                    resolved.insert("id".into(), Value::from(format!("row-{}", store.next_id)));
                }
                store.next_id += 1;
                store.rows.push(resolved);
            }
            Effect::UpdateRows { store, filter, set } => {
                let resolved = self.resolve_row(set, rule_screen);
                let store = self.stores.get_mut(store).expect("fixture-validated store");
                for row in &mut store.rows {
                    if filter.matches(&Value::Object(row.clone())) {
                        for (k, v) in &resolved {
                            row.insert(k.clone(), v.clone());
                        }
                    }
                }
            }
            Effect::DeleteRows { store, filter } => {
                let store = self.stores.get_mut(store).expect("fixture-validated store");
                store.rows.retain(|row| !filter.matches(&Value::Object(row.clone())));
            }
        }
    }

    /// Substitutes template forms in a row literal: `{"$field": "elem"}`
    /// reads a field buffer, `{"$field_is": {"element": .., "value": ..}}`
    /// compares one, `{"$clock": "date"|"weekday"}` reads the frozen clock.
    fn resolve_row(&self, template: &Map<String, Value>, rule_screen: &str) -> Map<String, Value> {
        template
            .iter()
            .map(|(k, v)| (k.clone(), self.resolve_template(v, rule_screen)))
            .collect()
    }

    fn resolve_template(&self, value: &Value, rule_screen: &str) -> Value {
        let Some(obj) = value.as_object() else {
            return value.clone();
        };
        if obj.len() == 1 {
            if let Some(elem) = obj.get("$field").and_then(Value::as_str) {
                return Value::String(self.field_content(rule_screen, elem).to_string());
            }
            if let Some(spec) = obj.get("$field_is") {
                let elem = spec.get("element").and_then(Value::as_str).unwrap_or_default();
                let expect = spec.get("value").and_then(Value::as_str).unwrap_or_default();
                return Value::Bool(self.field_content(rule_screen, elem) == expect);
            }
            if let Some(which) = obj.get("$clock").and_then(Value::as_str) {
                return Value::String(match which {
                    "weekday" => self.clock.weekday.clone(),
                    _ => self.clock.date.clone(),
                });
            }
        }
        value.clone()
    }

    /// Structural invariants, checked after every applied action and on
    /// fixture load.
    pub fn validate(&self) -> Result<(), String> {
        let app = self
            .apps
            .get(&self.foreground.app)
            .ok_or_else(|| format!("foreground app {:?} does not exist", self.foreground.app))?;
        let elements = app
            .screens
            .get(&self.foreground.screen)
            .ok_or_else(|| format!("foreground screen {:?} does not exist", self.foreground.screen))?;
        if let Some(focused) = &self.focused_field {
            let el = elements
                .iter()
                .find(|e| &e.id == focused)
                .ok_or_else(|| format!("focused element {focused:?} is not on the foreground screen"))?;
            if el.role != ElementRole::TextField {
                return Err(format!("focused element {focused:?} is not a text field"));
            }
        }
        let (w, h) = self.screen_dims;
        for (app_id, app) in &self.apps {
            for (screen_id, elements) in &app.screens {
                let mut seen = std::collections::BTreeSet::new();
                for el in elements {
                    if !seen.insert(&el.id) {
                        return Err(format!("duplicate element id {:?} on {app_id}/{screen_id}", el.id));
                    }
                    if el.bbox.x + el.bbox.w > w || el.bbox.y + el.bbox.h > h {
                        return Err(format!("element {:?} bbox exceeds {w}x{h}", el.id));
                    }
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn field_key(screen: &str, element: &str) -> String {
    format!("{screen}/{element}")
}
