#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use reqcheck::guienv::{load_app, Effect, PlanSet, SimApp};
use reqcheck::orchestrator::RunConfig;
use reqcheck::reqmodel::{parse_requirements_structured, Requirement};
use reqcheck::agentproto::{AdapterError, ModelAdapter, RawReply, Turn};
use reqcheck::storeapi::{AdapterFactory, Feedback, OracleFactory, Service, Store};
use serde::Deserialize;

pub const APPS: [&str; 2] = ["budget", "parking"];

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn app_dir(app: &str) -> PathBuf {
    fixtures().join(app)
}

pub fn app(name: &str) -> SimApp {
    load_app(&app_dir(name).join("app.json")).unwrap()
}

pub fn requirements_text(name: &str) -> String {
    std::fs::read_to_string(app_dir(name).join("requirements.txt")).unwrap()
}

pub fn requirements(name: &str) -> Vec<Requirement> {
    parse_requirements_structured(&requirements_text(name)).unwrap()
}

pub fn plans(name: &str) -> PlanSet {
    PlanSet::load(&app_dir(name).join("plans.json")).unwrap()
}

pub fn oracle_factory() -> Arc<OracleFactory> {
    Arc::new(OracleFactory::new(APPS.iter().map(|a| plans(a))))
}

/// A service over a fresh store in `dir`, driven by the oracle plans.
pub fn service(dir: &Path, cfg: RunConfig) -> Arc<Service> {
    Service::new(Store::open(dir.join("store")).unwrap(), cfg, oracle_factory())
}

/// Copies an app definition into `dir` so it can be patched.
pub fn scratch_app(dir: &Path, name: &str) -> PathBuf {
    let path = dir.join(format!("{name}.json"));
    std::fs::copy(app_dir(name).join("app.json"), &path).unwrap();
    path
}

#[derive(Deserialize)]
pub struct Patch {
    pub screen: String,
    pub widget: String,
    pub on_click: Vec<Effect>,
}

pub fn fixes(name: &str) -> BTreeMap<String, Vec<Patch>> {
    serde_json::from_str(&std::fs::read_to_string(app_dir(name).join("fixes.json")).unwrap()).unwrap()
}

/// Stands in for a programming agent: on feedback for a requirement it
/// applies the known repair to the app definition on disk.
pub struct Fixer {
    pub app_path: PathBuf,
    pub patches: BTreeMap<String, Vec<Patch>>,
    pub calls: Vec<Feedback>,
}

impl Fixer {
    pub fn new(app_path: PathBuf, name: &str) -> Self {
        Self { app_path, patches: fixes(name), calls: Vec::new() }
    }

    pub fn apply(&mut self, fb: &Feedback) {
        self.calls.push(fb.clone());
        let Some(patches) = self.patches.get(&fb.requirement_id) else { return };
        let mut app = load_app(&self.app_path).unwrap();
        for p in patches {
            app.widget_mut(&p.screen, &p.widget).unwrap().on_click = p.on_click.clone();
        }
        std::fs::write(&self.app_path, app.to_json_pretty()).unwrap();
    }
}

/// Krippendorff's α (ordinal) straight from the pairwise definition: the
/// mean squared ordinal distance over pairs of values within units versus
/// over all pairs of pairable values. Returns `None` when undefined.
pub fn alpha_pairwise_oracle(ratings: &[Vec<Option<u32>>]) -> Option<f64> {
    let units = ratings[0].len();
    let unit_values: Vec<Vec<u32>> = (0..units)
        .map(|u| ratings.iter().filter_map(|r| r[u]).collect::<Vec<_>>())
        .filter(|v| v.len() >= 2)
        .collect();
    let all: Vec<u32> = unit_values.iter().flatten().copied().collect();
    let n = all.len() as f64;
    if all.is_empty() {
        return None;
    }
    // Ordinal distance between ranks c and k: frequency mass from c to k,
    // counting the two end points at half weight, squared.
    let freq = |v: u32| all.iter().filter(|x| **x == v).count() as f64;
    let delta2 = |a: u32, b: u32| {
        let (lo, hi) = (a.min(b), a.max(b));
        let inner: f64 = all.iter().filter(|x| **x >= lo && **x <= hi).count() as f64;
        let d = inner - (freq(lo) + freq(hi)) / 2.0;
        d * d
    };
    let mut d_o = 0.0;
    for vals in &unit_values {
        let m = vals.len() as f64;
        let mut s = 0.0;
        for i in 0..vals.len() {
            for j in 0..vals.len() {
                if i != j {
                    s += delta2(vals[i], vals[j]);
                }
            }
        }
        d_o += s / (m - 1.0);
    }
    d_o /= n;
    let mut d_e = 0.0;
    for i in 0..all.len() {
        for j in 0..all.len() {
            if i != j {
                d_e += delta2(all[i], all[j]);
            }
        }
    }
    d_e /= n * (n - 1.0);
    if d_e == 0.0 {
        return None;
    }
    Some(1.0 - d_o / d_e)
}

/// Oracle agents that hold their first reply until the gate is opened, so a
/// test can observe a run while it is in flight.
pub struct GatedFactory {
    inner: OracleFactory,
    open: Arc<(std::sync::Mutex<bool>, std::sync::Condvar)>,
}

impl GatedFactory {
    pub fn new() -> Arc<Self> {
        Arc::new(Self {
            inner: OracleFactory::new(APPS.iter().map(|a| plans(a))),
            open: Arc::new((std::sync::Mutex::new(false), std::sync::Condvar::new())),
        })
    }

    pub fn open(&self) {
        *self.open.0.lock().unwrap() = true;
        self.open.1.notify_all();
    }
}

struct Gated {
    inner: Box<dyn ModelAdapter>,
    open: Arc<(std::sync::Mutex<bool>, std::sync::Condvar)>,
}

impl ModelAdapter for Gated {
    fn next_reply(&mut self, turn: &Turn<'_>) -> Result<RawReply, AdapterError> {
        let (lock, cv) = &*self.open;
        let _open = cv.wait_while(lock.lock().unwrap(), |open| !*open).unwrap();
        drop(_open);
        self.inner.next_reply(turn)
    }
}

impl AdapterFactory for GatedFactory {
    fn adapter(&self, app: &SimApp, req: &Requirement) -> Result<Box<dyn ModelAdapter>, String> {
        Ok(Box::new(Gated { inner: self.inner.adapter(app, req)?, open: self.open.clone() }))
    }
}

pub fn gated_service(dir: &Path) -> (Arc<Service>, Arc<GatedFactory>) {
    let gate = GatedFactory::new();
    (Service::new(Store::open(dir.join("store")).unwrap(), RunConfig::default(), gate.clone()), gate)
}
