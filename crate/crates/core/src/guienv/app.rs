use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Viewport {
    pub width: i32,
    pub height: i32,
}

impl Viewport {
    pub fn contains(&self, x: i32, y: i32) -> bool {
        (0..self.width).contains(&x) && (0..self.height).contains(&y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bounds {
    pub x: i32,
    pub y: i32,
    pub w: i32,
    pub h: i32,
}

impl Bounds {
    pub fn contains(&self, px: i32, py: i32) -> bool {
        px >= self.x && px < self.x + self.w && py >= self.y && py < self.y + self.h
    }

    pub fn overlaps(&self, o: &Bounds) -> bool {
        self.x < o.x + o.w && o.x < self.x + self.w && self.y < o.y + o.h && o.y < self.y + self.h
    }

    pub fn center(&self) -> (i32, i32) {
        (self.x + self.w / 2, self.y + self.h / 2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidgetKind {
    Button,
    TextInput,
    Label,
    ListView,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Effect {
    Navigate {
        to: String,
    },
    /// Appends one record to a store; record keys map to text-input ids on
    /// the same screen.
    Append {
        store: String,
        fields: BTreeMap<String, String>,
        #[serde(default)]
        skip_if_empty: bool,
    },
    SetField {
        widget: String,
        value: String,
    },
    ClearField {
        widget: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    Count,
    Sum,
}

/// Live value shown by a label, computed from a store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Binding {
    pub store: String,
    pub aggregate: Aggregate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    #[serde(default = "default_decimals")]
    pub decimals: u32,
}

fn default_decimals() -> u32 {
    2
}

fn default_row_height() -> i32 {
    30
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Widget {
    pub id: String,
    pub kind: WidgetKind,
    pub bounds: Bounds,
    #[serde(default)]
    pub label: String,
    /// Initial text of a text input.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub value: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub on_click: Vec<Effect>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bind: Option<Binding>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub store: Option<String>,
    /// Row format for list views, `{key}` placeholders are replaced by record values.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
    #[serde(default = "default_row_height")]
    pub row_height: i32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Screen {
    pub widgets: Vec<Widget>,
}

pub type Record = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimApp {
    pub app_id: String,
    pub viewport: Viewport,
    pub initial_screen: String,
    pub screens: BTreeMap<String, Screen>,
    #[serde(default)]
    pub stores: BTreeMap<String, Vec<Record>>,
}

#[derive(Debug, Error)]
pub enum AppError {
    #[error("cannot read app definition: {0}")]
    Io(#[from] std::io::Error),
    #[error("app definition violates the schema: {0}")]
    SchemaViolation(String),
    #[error("screen '{screen}' widget '{widget}' navigates to missing screen '{target}'")]
    DanglingTransition { screen: String, widget: String, target: String },
    #[error("widgets '{a}' and '{b}' overlap on screen '{screen}'")]
    OverlappingBounds { screen: String, a: String, b: String },
}

impl SimApp {
    pub fn widget(&self, screen: &str, id: &str) -> Option<&Widget> {
        self.screens.get(screen)?.widgets.iter().find(|w| w.id == id)
    }

    pub fn widget_mut(&mut self, screen: &str, id: &str) -> Option<&mut Widget> {
        self.screens.get_mut(screen)?.widgets.iter_mut().find(|w| w.id == id)
    }

    pub fn from_json(text: &str) -> Result<SimApp, AppError> {
        let app: SimApp = serde_json::from_str(text).map_err(|e| AppError::SchemaViolation(e.to_string()))?;
        app.validate()?;
        Ok(app)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("app serializes")
    }

    /// Checks every structural invariant of the definition.
    pub fn validate(&self) -> Result<(), AppError> {
        let schema = |msg: String| Err(AppError::SchemaViolation(msg));
        if self.viewport.width <= 0 || self.viewport.height <= 0 {
            return schema("viewport must have positive size".into());
        }
        if self.screens.is_empty() {
            return schema("app has no screens".into());
        }
        if !self.screens.contains_key(&self.initial_screen) {
            return Err(AppError::DanglingTransition {
                screen: "<initial>".into(),
                widget: "<initial>".into(),
                target: self.initial_screen.clone(),
            });
        }
        for (sid, screen) in &self.screens {
            let mut ids = BTreeSet::new();
            for w in &screen.widgets {
                if !ids.insert(w.id.as_str()) {
                    return schema(format!("duplicate widget id '{}' on screen '{sid}'", w.id));
                }
                let b = &w.bounds;
                if b.w <= 0 || b.h <= 0 {
                    return schema(format!("widget '{}' has empty bounds", w.id));
                }
                if b.x < 0 || b.y < 0 || b.x + b.w > self.viewport.width || b.y + b.h > self.viewport.height {
                    return schema(format!("widget '{}' lies outside the viewport", w.id));
                }
                if !w.on_click.is_empty() && w.kind != WidgetKind::Button {
                    return schema(format!("only buttons may have on_click effects ('{}')", w.id));
                }
                if w.bind.is_some() && w.kind != WidgetKind::Label {
                    return schema(format!("only labels may bind to a store ('{}')", w.id));
                }
                if let Some(bind) = &w.bind {
                    if !self.stores.contains_key(&bind.store) {
                        return schema(format!("widget '{}' binds unknown store '{}'", w.id, bind.store));
                    }
                    if bind.aggregate == Aggregate::Sum && bind.key.is_none() {
                        return schema(format!("sum binding of '{}' needs a key", w.id));
                    }
                }
                if w.kind == WidgetKind::ListView {
                    match &w.store {
                        Some(s) if self.stores.contains_key(s) => {}
                        _ => return schema(format!("list view '{}' needs a known store", w.id)),
                    }
                    if w.row_height <= 0 {
                        return schema(format!("list view '{}' needs a positive row height", w.id));
                    }
                }
            }
            for (i, a) in screen.widgets.iter().enumerate() {
                for b in &screen.widgets[i + 1..] {
                    if a.bounds.overlaps(&b.bounds) {
                        return Err(AppError::OverlappingBounds { screen: sid.clone(), a: a.id.clone(), b: b.id.clone() });
                    }
                }
            }
            for w in &screen.widgets {
                for effect in &w.on_click {
                    self.validate_effect(sid, screen, w, effect)?;
                }
            }
        }
        Ok(())
    }

    fn validate_effect(&self, sid: &str, screen: &Screen, w: &Widget, effect: &Effect) -> Result<(), AppError> {
        let kind_of = |id: &str| screen.widgets.iter().find(|x| x.id == id).map(|x| x.kind);
        match effect {
            Effect::Navigate { to } => {
                if !self.screens.contains_key(to) {
                    return Err(AppError::DanglingTransition {
                        screen: sid.into(),
                        widget: w.id.clone(),
                        target: to.clone(),
                    });
                }
            }
            Effect::Append { store, fields, .. } => {
                if !self.stores.contains_key(store) {
                    return Err(AppError::SchemaViolation(format!("'{}' appends to unknown store '{store}'", w.id)));
                }
                for input in fields.values() {
                    if kind_of(input) != Some(WidgetKind::TextInput) {
                        return Err(AppError::SchemaViolation(format!(
                            "'{}' reads '{input}', which is not a text input on screen '{sid}'",
                            w.id
                        )));
                    }
                }
            }
            Effect::SetField { widget, .. } | Effect::ClearField { widget } => {
                if !matches!(kind_of(widget), Some(WidgetKind::TextInput | WidgetKind::Label)) {
                    return Err(AppError::SchemaViolation(format!(
                        "'{}' edits '{widget}', which is not a text input or label on screen '{sid}'",
                        w.id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Reads and validates an app definition file.
pub fn load_app(path: &Path) -> Result<SimApp, AppError> {
    SimApp::from_json(&std::fs::read_to_string(path)?)
}
