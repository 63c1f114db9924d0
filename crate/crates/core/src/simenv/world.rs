//! World documents: apps declared as screens, elements and transition rules.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::condition::Predicate;
use crate::perception::{Bounds, ElementKind};

pub const WORLD_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WorldError {
    #[error("schema error at {path}: {detail}")]
    SchemaError { path: String, detail: String },
    #[error("dangling screen reference {0}")]
    DanglingScreen(String),
}

fn schema(path: impl Into<String>, detail: impl Into<String>) -> WorldError {
    WorldError::SchemaError { path: path.into(), detail: detail.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementScript {
    pub id: String,
    #[serde(default = "text_kind")]
    pub kind: ElementKind,
    /// May reference world variables as `{name}`.
    pub content: String,
    pub bounds: Bounds,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<(u32, u32)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visible_if: Option<Predicate>,
}

fn text_kind() -> ElementKind {
    ElementKind::Text
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenScript {
    pub beacon: String,
    #[serde(default)]
    pub elements: Vec<ElementScript>,
    /// Machine-checkable condition that holds whenever this screen is shown.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry: Option<Predicate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    /// Tap inside the element with this id.
    Tap(String),
    /// Any typed text, or exactly this text (case-insensitive).
    Type(Option<String>),
    Enter,
    Back,
    Swipe(Option<Direction>),
    Wait,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationOp {
    Set,
    Add,
    /// Stores the text of the triggering Type action.
    SetInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mutation {
    pub var: String,
    pub op: MutationOp,
    #[serde(default)]
    pub value: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub screen: String,
    pub on: Trigger,
    /// Destination screen; absent means stay.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mutate: Vec<Mutation>,
    /// Declared wrong destination used when a misroute fault fires.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub misroute: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppScript {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub package: Option<String>,
    pub initial: String,
    pub screens: BTreeMap<String, ScreenScript>,
    #[serde(default)]
    pub rules: Vec<Rule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub version: u32,
    pub screen_size: (u32, u32),
    #[serde(default)]
    pub vars: BTreeMap<String, serde_json::Value>,
    /// Launcher icons; generated from the app list when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub launcher: Option<ScreenScript>,
    pub apps: Vec<AppScript>,
}

impl WorldSpec {
    pub fn app(&self, name: &str) -> Option<&AppScript> {
        self.apps.iter().find(|a| a.name.eq_ignore_ascii_case(name.trim()))
    }

    /// The launcher screen: declared, or one icon per app on a grid.
    pub fn launcher_screen(&self) -> ScreenScript {
        if let Some(l) = &self.launcher {
            return l.clone();
        }
        let (w, _) = self.screen_size;
        let cols = 4u32;
        let cell = w / cols;
        let elements = self
            .apps
            .iter()
            .enumerate()
            .map(|(i, app)| {
                let (col, row) = (i as u32 % cols, i as u32 / cols);
                let left = col * cell + cell / 8;
                let top = 120 + row * (cell + 40);
                ElementScript {
                    id: format!("app:{}", app.name),
                    kind: ElementKind::Icon,
                    content: app.name.clone(),
                    bounds: Bounds::new(left, top, left + cell * 3 / 4, top + cell * 3 / 4).expect("grid cell"),
                    center: None,
                    visible_if: None,
                }
            })
            .collect();
        ScreenScript { beacon: "Home Screen".into(), elements, entry: None }
    }

    fn validate(&self) -> Result<(), WorldError> {
        if self.version != WORLD_SCHEMA_VERSION {
            return Err(schema("version", format!("unsupported version {}", self.version)));
        }
        let size = self.screen_size;
        if size.0 == 0 || size.1 == 0 {
            return Err(schema("screen_size", "must be positive"));
        }
        let check_screen = |path: &str, s: &ScreenScript| -> Result<(), WorldError> {
            if s.beacon.trim().is_empty() {
                return Err(schema(format!("{path}.beacon"), "empty beacon"));
            }
            let mut ids = BTreeSet::new();
            for (i, e) in s.elements.iter().enumerate() {
                let p = format!("{path}.elements[{i}]");
                if !ids.insert(e.id.as_str()) {
                    return Err(schema(p, format!("duplicate element id {:?}", e.id)));
                }
                if !e.bounds.within(size) {
                    return Err(schema(format!("{p}.bounds"), "outside screen"));
                }
                if let Some((x, y)) = e.center {
                    if !e.bounds.contains(x as i64, y as i64) {
                        return Err(schema(format!("{p}.center"), "outside bounds"));
                    }
                }
            }
            Ok(())
        };
        if let Some(l) = &self.launcher {
            check_screen("launcher", l)?;
        }
        let mut names = BTreeSet::new();
        for (ai, app) in self.apps.iter().enumerate() {
            let ap = format!("apps[{ai}]");
            if app.name.trim().is_empty() {
                return Err(schema(format!("{ap}.name"), "empty app name"));
            }
            if !names.insert(app.name.to_lowercase()) {
                return Err(schema(format!("{ap}.name"), format!("duplicate app {:?}", app.name)));
            }
            if !app.screens.contains_key(&app.initial) {
                return Err(WorldError::DanglingScreen(format!("{}/{}", app.name, app.initial)));
            }
            for (sid, s) in &app.screens {
                check_screen(&format!("{ap}.screens.{sid}"), s)?;
            }
            for (ri, r) in app.rules.iter().enumerate() {
                for target in [Some(&r.screen), r.to.as_ref(), r.misroute.as_ref()].into_iter().flatten() {
                    if !app.screens.contains_key(target) {
                        return Err(WorldError::DanglingScreen(format!("{}/{target}", app.name)));
                    }
                }
                if let Trigger::Tap(el) = &r.on {
                    if !app.screens[&r.screen].elements.iter().any(|e| &e.id == el) {
                        return Err(schema(format!("{ap}.rules[{ri}].on.tap"), format!("no element {el:?} on {}", r.screen)));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Parses and validates a world document.
pub fn load_world(doc: &str) -> Result<WorldSpec, WorldError> {
    let spec: WorldSpec = serde_json::from_str(doc).map_err(|e| schema(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
    spec.validate()?;
    Ok(spec)
}
