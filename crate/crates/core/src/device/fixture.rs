//! Fixture files that declare simulated worlds.
//!
//! A world file names the screen geometry, frozen clock, home screen, app
//! fixture files, and preloaded store records. App files declare screens,
//! elements, and transition rules. Everything is validated on load so broken
//! fixtures fail before any episode runs.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::Deserialize;
use serde_json::{Map, Value};
use thiserror::Error;

use super::{
    AppModel, DataStore, DeviceClock, DeviceState, Effect, ScreenRef, StoreKind, TransitionRule, UiElement,
};

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid fixture {path}: {reason}")]
    Invalid { path: String, reason: String },
}

#[derive(Debug, Deserialize)]
struct WorldFile {
    screen_dims: (u32, u32),
    clock: DeviceClock,
    home: ScreenRef,
    apps: Vec<String>,
    #[serde(default)]
    stores: BTreeMap<String, StoreFile>,
}

#[derive(Debug, Deserialize)]
struct StoreFile {
    kind: StoreKind,
    #[serde(default)]
    rows: Vec<Map<String, Value>>,
}

#[derive(Debug, Deserialize)]
struct AppFile {
    id: String,
    screens: BTreeMap<String, Vec<UiElement>>,
    #[serde(default)]
    transitions: Vec<TransitionRule>,
    /// "screen/element" → initial buffer content (e.g. a switch that starts
    /// in the "on" position).
    #[serde(default)]
    initial_fields: BTreeMap<String, String>,
}

/// Loads a world fixture and returns the fully validated initial state. App
/// paths are resolved relative to the world file's directory.
pub fn load_world(path: impl AsRef<Path>) -> Result<DeviceState, FixtureError> {
    let path = path.as_ref();
    let world: WorldFile = read_json(path)?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));

    let mut apps = BTreeMap::new();
    for app_path in &world.apps {
        let full = dir.join(app_path);
        let app: AppFile = read_json(&full)?;
        let model = AppModel {
            screens: app.screens,
            transitions: app.transitions,
            scroll_offsets: BTreeMap::new(),
            field_contents: app.initial_fields,
        };
        if apps.insert(app.id.clone(), model).is_some() {
            return Err(invalid(path, format!("duplicate app id {:?}", app.id)));
        }
    }

    let mut stores = BTreeMap::new();
    for (store_id, file) in world.stores {
        let mut store = DataStore::new(file.kind);
        store.next_id = file.rows.len() as u64 + 1;
        for (i, mut row) in file.rows.into_iter().enumerate() {
            if !row.contains_key("id") {
                row.insert("id".into(), Value::from(format!("seed-{}", i + 1)));
            }
            store.rows.push(row);
        }
        stores.insert(store_id, store);
    }

    let state = DeviceState {
        screen_dims: world.screen_dims,
        clock: world.clock,
        home: world.home.clone(),
        foreground: world.home,
        focused_field: None,
        clipboard: String::new(),
        apps,
        stores,
    };

    validate_world(path, &state)?;
    Ok(state)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, FixtureError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| FixtureError::Io { path: path.display().to_string(), source })?;
    serde_json::from_str(&text).map_err(|source| FixtureError::Parse { path: path.display().to_string(), source })
}

fn invalid(path: &Path, reason: String) -> FixtureError {
    FixtureError::Invalid { path: path.display().to_string(), reason }
}

fn validate_world(path: &Path, state: &DeviceState) -> Result<(), FixtureError> {
    state.validate().map_err(|reason| invalid(path, reason))?;

    let date = NaiveDate::parse_from_str(&state.clock.date, "%Y-%m-%d")
        .map_err(|e| invalid(path, format!("clock date {:?}: {e}", state.clock.date)))?;
    let weekday = format!("{:?}", date.weekday());
    let full = match weekday.as_str() {
        "Mon" => "Monday",
        "Tue" => "Tuesday",
        "Wed" => "Wednesday",
        "Thu" => "Thursday",
        "Fri" => "Friday",
        "Sat" => "Saturday",
        "Sun" => "Sunday",
        other => other,
    };
    if full != state.clock.weekday {
        return Err(invalid(
            path,
            format!("clock says {} but {} is a {}", state.clock.weekday, state.clock.date, full),
        ));
    }

    for (app_id, app) in &state.apps {
        for rule in &app.transitions {
            let elements = app
                .screens
                .get(&rule.screen)
                .ok_or_else(|| invalid(path, format!("{app_id}: rule on unknown screen {:?}", rule.screen)))?;
            for elem in [&rule.element, &rule.end_element].into_iter().flatten() {
                if !elements.iter().any(|e| &e.id == elem) {
                    return Err(invalid(
                        path,
                        format!("{app_id}/{}: rule references unknown element {elem:?}", rule.screen),
                    ));
                }
            }
            for effect in &rule.effects {
                validate_effect(path, state, app_id, app, &rule.screen, effect)?;
            }
        }
        for key in app.field_contents.keys() {
            let Some((screen, elem)) = key.split_once('/') else {
                return Err(invalid(path, format!("{app_id}: initial field key {key:?} is not screen/element")));
            };
            let ok = app.screens.get(screen).is_some_and(|els| els.iter().any(|e| e.id == elem));
            if !ok {
                return Err(invalid(path, format!("{app_id}: initial field {key:?} has no matching element")));
            }
        }
    }
    Ok(())
}

fn validate_effect(
    path: &Path,
    state: &DeviceState,
    app_id: &str,
    app: &AppModel,
    rule_screen: &str,
    effect: &Effect,
) -> Result<(), FixtureError> {
    let check_store = |store: &str, mutating: bool| -> Result<(), FixtureError> {
        let Some(s) = state.stores.get(store) else {
            return Err(invalid(path, format!("{app_id}: effect targets unknown store {store:?}")));
        };
        if mutating && s.kind == StoreKind::CallbackEvents {
            return Err(invalid(path, format!("{app_id}: store {store:?} is append-only")));
        }
        Ok(())
    };
    let check_element = |elem: &str| -> Result<(), FixtureError> {
        let ok = app.screens.get(rule_screen).is_some_and(|els| els.iter().any(|e| e.id == elem));
        if ok {
            Ok(())
        } else {
            Err(invalid(path, format!("{app_id}/{rule_screen}: effect references unknown element {elem:?}")))
        }
    };
    match effect {
        Effect::Goto { app: target_app, screen } => {
            let target = target_app.as_deref().unwrap_or(app_id);
            let ok = state.apps.get(target).is_some_and(|a| a.screens.contains_key(screen));
            if !ok {
                return Err(invalid(path, format!("{app_id}: goto unknown screen {target}/{screen}")));
            }
        }
        Effect::Focus { element } | Effect::SetField { element, .. } | Effect::ToggleField { element, .. } => {
            check_element(element)?;
        }
        Effect::ClearFocus | Effect::ClearFields { .. } => {}
        Effect::AppendRow { store, .. } => check_store(store, false)?,
        Effect::UpdateRows { store, .. } | Effect::DeleteRows { store, .. } => check_store(store, true)?,
    }
    Ok(())
}
