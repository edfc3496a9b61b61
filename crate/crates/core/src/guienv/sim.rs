use std::collections::BTreeMap;
use std::fmt::Write as _;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::app::{Aggregate, Binding, Effect, Record, SimApp, Widget, WidgetKind};
use crate::agentproto::Action;

/// Runtime state of a simulated app. Field values, scroll offsets and focus
/// are keyed by `screen/widget`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimState {
    pub current_screen: String,
    pub field_values: BTreeMap<String, String>,
    pub store_values: BTreeMap<String, Vec<Record>>,
    pub scroll_offsets: BTreeMap<String, usize>,
    pub focus: Option<String>,
    pub step_count: u64,
}

fn key(screen: &str, widget: &str) -> String {
    format!("{screen}/{widget}")
}

mod hex_u64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{v:016x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let s = String::deserialize(d)?;
        u64::from_str_radix(&s, 16).map_err(serde::de::Error::custom)
    }
}

/// Textual stand-in for a screenshot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub rendering: String,
    #[serde(with = "hex_u64")]
    pub state_hash: u64,
    pub step_index: u64,
}

impl Observation {
    pub fn hash_hex(&self) -> String {
        format!("{:016x}", self.state_hash)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum EnvError {
    #[error("({x}, {y}) lies outside the {width}x{height} viewport")]
    OutOfViewport { x: i32, y: i32, width: i32, height: i32 },
    #[error("finish is handled by the orchestrator, not the environment")]
    FinishNotExecutable,
    #[error("environment backend failure: {0}")]
    Backend(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvWarning {
    TypeWithoutFocus,
}

/// Digest of the full state, stable across processes and platforms.
pub fn state_hash(state: &SimState) -> u64 {
    let bytes = serde_json::to_vec(state).expect("state serializes");
    let digest = Sha256::digest(&bytes);
    u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn render_template(template: Option<&str>, record: &Record) -> String {
    match template {
        Some(t) => {
            let mut out = t.to_string();
            for (k, v) in record {
                out = out.replace(&format!("{{{k}}}"), v);
            }
            out
        }
        None => record.values().cloned().collect::<Vec<_>>().join(" | "),
    }
}

impl SimState {
    /// Initial state of `app`.
    pub fn reset(app: &SimApp) -> SimState {
        let mut field_values = BTreeMap::new();
        for (sid, screen) in &app.screens {
            for w in screen.widgets.iter().filter(|w| w.kind == WidgetKind::TextInput) {
                field_values.insert(key(sid, &w.id), w.value.clone());
            }
        }
        SimState {
            current_screen: app.initial_screen.clone(),
            field_values,
            store_values: app.stores.clone(),
            scroll_offsets: BTreeMap::new(),
            focus: None,
            step_count: 0,
        }
    }

    pub fn hash(&self) -> u64 {
        state_hash(self)
    }

    fn widget_at<'a>(&self, app: &'a SimApp, x: i32, y: i32) -> Option<&'a Widget> {
        app.screens.get(&self.current_screen)?.widgets.iter().find(|w| w.bounds.contains(x, y))
    }

    fn aggregate(&self, b: &Binding) -> String {
        let rows = self.store_values.get(&b.store).map(Vec::as_slice).unwrap_or(&[]);
        match b.aggregate {
            Aggregate::Count => rows.len().to_string(),
            Aggregate::Sum => {
                let k = b.key.as_deref().unwrap_or_default();
                let total: Decimal =
                    rows.iter().filter_map(|r| r.get(k)).filter_map(|v| v.trim().parse::<Decimal>().ok()).sum();
                format!("{:.*}", b.decimals as usize, total)
            }
        }
    }

    fn rows(&self, w: &Widget) -> Vec<String> {
        let store = w.store.as_deref().unwrap_or_default();
        self.store_values
            .get(store)
            .map(|rows| rows.iter().map(|r| render_template(w.template.as_deref(), r)).collect())
            .unwrap_or_default()
    }

    fn visible_rows(&self, w: &Widget) -> Vec<String> {
        let offset = self.scroll_offsets.get(&key(&self.current_screen, &w.id)).copied().unwrap_or(0);
        let capacity = (w.bounds.h / w.row_height).max(1) as usize;
        self.rows(w).into_iter().skip(offset).take(capacity).collect()
    }

    /// Number of records behind a list view, visible or not.
    pub fn row_count(&self, w: &Widget) -> usize {
        let store = w.store.as_deref().unwrap_or_default();
        self.store_values.get(store).map_or(0, Vec::len)
    }

    /// Text a widget on the current screen displays.
    pub fn display_text(&self, w: &Widget) -> String {
        let k = key(&self.current_screen, &w.id);
        match w.kind {
            WidgetKind::TextInput => self.field_values.get(&k).cloned().unwrap_or_default(),
            WidgetKind::Button => w.label.clone(),
            WidgetKind::Label => match (self.field_values.get(&k), &w.bind) {
                (Some(v), _) => v.clone(),
                (None, Some(b)) => format!("{}{}", w.label, self.aggregate(b)),
                (None, None) => w.label.clone(),
            },
            WidgetKind::ListView => self.visible_rows(w).join("; "),
        }
    }

    /// Deterministic rendering of the current screen in (y, x) reading order.
    pub fn render(&self, app: &SimApp) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "screen {} ({}x{})",
            self.current_screen, app.viewport.width, app.viewport.height
        );
        let Some(screen) = app.screens.get(&self.current_screen) else {
            return out;
        };
        let mut widgets: Vec<&Widget> = screen.widgets.iter().collect();
        widgets.sort_by(|a, b| (a.bounds.y, a.bounds.x, &a.id).cmp(&(b.bounds.y, b.bounds.x, &b.id)));
        for w in widgets {
            let b = w.bounds;
            let kind = match w.kind {
                WidgetKind::Button => "button",
                WidgetKind::TextInput => "text_input",
                WidgetKind::Label => "label",
                WidgetKind::ListView => "list_view",
            };
            let _ = write!(out, "[{kind}] {} @({},{} {}x{})", w.id, b.x, b.y, b.w, b.h);
            match w.kind {
                WidgetKind::TextInput => {
                    let _ = write!(out, " {:?} = {:?}", w.label, self.display_text(w));
                    if self.focus.as_deref() == Some(key(&self.current_screen, &w.id).as_str()) {
                        out.push_str(" *focused*");
                    }
                    out.push('\n');
                }
                WidgetKind::ListView => {
                    let k = key(&self.current_screen, &w.id);
                    let offset = self.scroll_offsets.get(&k).copied().unwrap_or(0);
                    let _ = writeln!(out, " rows={} offset={}", self.row_count(w), offset);
                    for row in self.visible_rows(w) {
                        let _ = writeln!(out, "  - {row:?}");
                    }
                }
                _ => {
                    let _ = writeln!(out, " {:?}", self.display_text(w));
                }
            }
        }
        out
    }

    pub fn observe(&self, app: &SimApp) -> Observation {
        Observation { rendering: self.render(app), state_hash: self.hash(), step_index: self.step_count }
    }

    fn apply_effect(&mut self, effect: &Effect) {
        let screen = self.current_screen.clone();
        match effect {
            Effect::Navigate { to } => {
                self.current_screen = to.clone();
                self.focus = None;
            }
            Effect::Append { store, fields, skip_if_empty } => {
                let record: Record = fields
                    .iter()
                    .map(|(k, w)| (k.clone(), self.field_values.get(&key(&screen, w)).cloned().unwrap_or_default()))
                    .collect();
                if *skip_if_empty && record.values().any(|v| v.trim().is_empty()) {
                    return;
                }
                self.store_values.entry(store.clone()).or_default().push(record);
            }
            Effect::SetField { widget, value } => {
                self.field_values.insert(key(&screen, widget), value.clone());
            }
            Effect::ClearField { widget } => {
                self.field_values.insert(key(&screen, widget), String::new());
            }
        }
    }

    fn click(&mut self, app: &SimApp, x: i32, y: i32) {
        let Some(w) = self.widget_at(app, x, y) else { return };
        match w.kind {
            WidgetKind::Button => {
                self.focus = None;
                for effect in &w.on_click {
                    self.apply_effect(effect);
                }
            }
            WidgetKind::TextInput => self.focus = Some(key(&self.current_screen, &w.id)),
            WidgetKind::Label | WidgetKind::ListView => {}
        }
    }

    fn scroll(&mut self, app: &SimApp, x: i32, y: i32, dy: i32) {
        let Some(w) = self.widget_at(app, x, y) else { return };
        if w.kind != WidgetKind::ListView {
            return;
        }
        let capacity = (w.bounds.h / w.row_height).max(1) as usize;
        let max_offset = self.row_count(w).saturating_sub(capacity) as i64;
        let k = key(&self.current_screen, &w.id);
        let current = self.scroll_offsets.get(&k).copied().unwrap_or(0) as i64;
        let next = (current + i64::from(dy / w.row_height)).clamp(0, max_offset) as usize;
        if next == 0 {
            self.scroll_offsets.remove(&k);
        } else {
            self.scroll_offsets.insert(k, next);
        }
    }

    /// Applies one action. Every accepted action advances `step_count` by one;
    /// rejected actions leave the state untouched.
    pub fn execute(&mut self, app: &SimApp, action: &Action) -> Result<Option<EnvWarning>, EnvError> {
        let in_view = |x: i32, y: i32| {
            if app.viewport.contains(x, y) {
                Ok(())
            } else {
                Err(EnvError::OutOfViewport { x, y, width: app.viewport.width, height: app.viewport.height })
            }
        };
        let mut warning = None;
        match action {
            Action::Click { x, y } | Action::DoubleClick { x, y } => {
                in_view(*x, *y)?;
                self.click(app, *x, *y);
            }
            Action::Scroll { x, y, dy, .. } => {
                in_view(*x, *y)?;
                self.scroll(app, *x, *y, *dy);
            }
            Action::Type { text } => match self.focus.as_ref().and_then(|f| self.field_values.get_mut(f)) {
                Some(v) => v.push_str(text),
                None => warning = Some(EnvWarning::TypeWithoutFocus),
            },
            Action::KeyPress { .. } | Action::Wait { .. } => {}
            Action::Finish { .. } => return Err(EnvError::FinishNotExecutable),
        }
        self.step_count += 1;
        Ok(warning)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn app() -> SimApp {
        SimApp::from_json(
            &json!({
                "app_id": "t",
                "viewport": {"width": 300, "height": 300},
                "initial_screen": "home",
                "stores": {"expenses": []},
                "screens": {
                    "home": {"widgets": [
                        {"id": "total", "kind": "label", "label": "Total: ", "bounds": {"x": 0, "y": 0, "w": 100, "h": 20},
                         "bind": {"store": "expenses", "aggregate": "sum", "key": "amount"}},
                        {"id": "amount", "kind": "text_input", "label": "Amount", "bounds": {"x": 0, "y": 30, "w": 100, "h": 20}},
                        {"id": "add", "kind": "button", "label": "Add expense", "bounds": {"x": 0, "y": 60, "w": 100, "h": 20},
                         "on_click": [
                            {"op": "append", "store": "expenses", "fields": {"amount": "amount"}, "skip_if_empty": true},
                            {"op": "clear_field", "widget": "amount"}
                         ]},
                        {"id": "list", "kind": "list_view", "store": "expenses", "template": "{amount}",
                         "bounds": {"x": 0, "y": 100, "w": 100, "h": 60}, "row_height": 30},
                        {"id": "next", "kind": "button", "label": "Next", "bounds": {"x": 150, "y": 0, "w": 100, "h": 20},
                         "on_click": [{"op": "navigate", "to": "other"}]}
                    ]},
                    "other": {"widgets": []}
                }
            })
            .to_string(),
        )
        .unwrap()
    }

    fn add_expense(s: &mut SimState, a: &SimApp, amount: &str) {
        s.execute(a, &Action::Click { x: 5, y: 35 }).unwrap();
        s.execute(a, &Action::Type { text: amount.into() }).unwrap();
        s.execute(a, &Action::Click { x: 5, y: 65 }).unwrap();
    }

    #[test]
    fn append_effect_grows_store() {
        let a = app();
        let mut s = SimState::reset(&a);
        add_expense(&mut s, &a, "12.50");
        assert_eq!(s.store_values["expenses"].len(), 1);
        assert_eq!(s.field_values["home/amount"], "");
        assert!(s.render(&a).contains("\"Total: 12.50\""));
        assert_eq!(s.step_count, 3);
    }

    #[test]
    fn skip_if_empty_guards_append() {
        let a = app();
        let mut s = SimState::reset(&a);
        s.execute(&a, &Action::Click { x: 5, y: 65 }).unwrap();
        assert!(s.store_values["expenses"].is_empty());
    }

    #[test]
    fn type_without_focus_is_a_warning() {
        let a = app();
        let mut s = SimState::reset(&a);
        let before = s.clone();
        assert_eq!(s.execute(&a, &Action::Type { text: "12.50".into() }), Ok(Some(EnvWarning::TypeWithoutFocus)));
        assert_eq!(s.step_count, 1);
        s.step_count = 0;
        assert_eq!(s, before);
    }

    #[test]
    fn out_of_viewport_is_rejected() {
        let a = app();
        let mut s = SimState::reset(&a);
        assert!(matches!(s.execute(&a, &Action::Click { x: -5, y: 10 }), Err(EnvError::OutOfViewport { .. })));
        assert!(matches!(s.execute(&a, &Action::Click { x: 300, y: 10 }), Err(EnvError::OutOfViewport { .. })));
        assert_eq!(s.step_count, 0);
        assert_eq!(
            s.execute(&a, &Action::Finish { summary_json: "{}".into() }),
            Err(EnvError::FinishNotExecutable)
        );
    }

    #[test]
    fn scroll_is_clamped() {
        let a = app();
        let mut s = SimState::reset(&a);
        for v in ["1", "2", "3"] {
            add_expense(&mut s, &a, v);
        }
        s.execute(&a, &Action::Scroll { x: 5, y: 110, dx: 0, dy: 300 }).unwrap();
        assert_eq!(s.scroll_offsets["home/list"], 1);
        assert!(s.render(&a).contains("rows=3 offset=1"));
        s.execute(&a, &Action::Scroll { x: 5, y: 110, dx: 0, dy: -300 }).unwrap();
        assert!(s.scroll_offsets.is_empty());
    }

    #[test]
    fn navigation_clears_focus() {
        let a = app();
        let mut s = SimState::reset(&a);
        s.execute(&a, &Action::Click { x: 5, y: 35 }).unwrap();
        assert!(s.focus.is_some());
        s.execute(&a, &Action::Click { x: 160, y: 5 }).unwrap();
        assert_eq!(s.current_screen, "other");
        assert_eq!(s.focus, None);
    }

    #[test]
    fn rendering_uses_reading_order() {
        let a = app();
        let r = SimState::reset(&a).render(&a);
        let pos = |id: &str| r.find(&format!("] {id} @")).unwrap();
        assert!(pos("total") < pos("next"));
        assert!(pos("next") < pos("amount"));
        assert!(pos("amount") < pos("add"));
        assert!(pos("add") < pos("list"));
    }

    #[test]
    fn equal_states_render_equally() {
        let a = app();
        let mut s1 = SimState::reset(&a);
        let mut s2 = SimState::reset(&a);
        add_expense(&mut s1, &a, "4");
        add_expense(&mut s2, &a, "4");
        assert_eq!(s1.observe(&a), s2.observe(&a));
        s2.field_values.insert("home/amount".into(), "x".into());
        assert_ne!(s1.hash(), s2.hash());
    }
}
