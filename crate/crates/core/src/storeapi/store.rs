use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orchestrator::{read_run_log, write_run_log, RunLogError, VerificationRun};
use crate::reqmodel::{Requirement, VerificationSetup};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage is full")]
    StorageFull,
    #[error("store i/o: {0}")]
    Io(std::io::Error),
    #[error("corrupt store file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("unknown setup {0}")]
    UnknownSetup(String),
    #[error("run {0} has not terminated")]
    NotTerminated(String),
}

impl From<std::io::Error> for StoreError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::StorageFull {
            StoreError::StorageFull
        } else {
            StoreError::Io(e)
        }
    }
}

impl From<RunLogError> for StoreError {
    fn from(e: RunLogError) -> Self {
        match e {
            RunLogError::Io(e) => e.into(),
            other => StoreError::Corrupt { path: PathBuf::new(), reason: other.to_string() },
        }
    }
}

/// Setup file contents: the setup and its requirements with current state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetupRecord {
    pub setup: VerificationSetup,
    pub requirements: Vec<Requirement>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetupIndex {
    pub app_ref: String,
    /// requirement id → run ids, ascending.
    pub requirements: BTreeMap<String, Vec<String>>,
}

/// setup id → requirements → runs. Always derivable from the files alone.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreIndex {
    pub setups: BTreeMap<String, SetupIndex>,
}

impl StoreIndex {
    pub fn run_ids(&self) -> impl Iterator<Item = &String> {
        self.setups.values().flat_map(|s| s.requirements.values().flatten())
    }
}

/// File-backed store rooted at one directory:
///
/// ```text
/// index.json
/// setups/<setup_id>.json
/// runs/<run_id>.jsonl
/// ```
///
/// Every file is replaced atomically. The index is a cache; if it is missing
/// or unreadable it is rebuilt from the setup and run files.
pub struct Store {
    root: PathBuf,
    index: StoreIndex,
    setups: BTreeMap<String, SetupRecord>,
    next_setup: u64,
    next_run: u64,
}

fn numeric_suffix(id: &str) -> u64 {
    id.rsplit('-').next().and_then(|n| n.parse().ok()).unwrap_or(0)
}

fn is_temp(path: &Path) -> bool {
    path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with('.'))
}

fn files_with_ext(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, StoreError> {
    let mut out = Vec::new();
    if !dir.exists() {
        return Ok(out);
    }
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if !is_temp(&path) && path.extension().and_then(|e| e.to_str()) == Some(ext) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::Builder::new().prefix(".tmp-").tempfile_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| StoreError::from(e.error))?;
    Ok(())
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        std::fs::create_dir_all(root.join("setups"))?;
        std::fs::create_dir_all(root.join("runs"))?;
        let mut setups = BTreeMap::new();
        for path in files_with_ext(&root.join("setups"), "json")? {
            let text = std::fs::read_to_string(&path)?;
            let rec: SetupRecord = serde_json::from_str(&text)
                .map_err(|e| StoreError::Corrupt { path: path.clone(), reason: e.to_string() })?;
            setups.insert(rec.setup.id.clone(), rec);
        }
        let mut store = Store { root, index: StoreIndex::default(), setups, next_setup: 1, next_run: 1 };
        store.index = match store.read_index() {
            Some(idx) if store.index_consistent(&idx) => idx,
            _ => {
                let idx = store.scan()?;
                store.write_index_of(&idx)?;
                idx
            }
        };
        store.next_setup = store.setups.keys().map(|k| numeric_suffix(k)).max().unwrap_or(0) + 1;
        store.next_run = store.index.run_ids().map(|k| numeric_suffix(k)).max().unwrap_or(0) + 1;
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn index_path(&self) -> PathBuf {
        self.root.join("index.json")
    }

    fn setup_path(&self, id: &str) -> PathBuf {
        self.root.join("setups").join(format!("{id}.json"))
    }

    pub fn run_path(&self, run_id: &str) -> PathBuf {
        self.root.join("runs").join(format!("{run_id}.jsonl"))
    }

    fn read_index(&self) -> Option<StoreIndex> {
        let text = std::fs::read_to_string(self.index_path()).ok()?;
        serde_json::from_str(&text).ok()
    }

    fn index_consistent(&self, idx: &StoreIndex) -> bool {
        idx.setups.keys().eq(self.setups.keys()) && idx.run_ids().all(|r| self.run_path(r).exists())
    }

    /// Rebuilds the index from the setup and run files.
    pub fn scan(&self) -> Result<StoreIndex, StoreError> {
        let mut idx = StoreIndex::default();
        for (id, rec) in &self.setups {
            let entry = idx.setups.entry(id.clone()).or_default();
            entry.app_ref = rec.setup.app_ref.clone();
            for r in &rec.requirements {
                entry.requirements.entry(r.id.clone()).or_default();
            }
        }
        for path in files_with_ext(&self.root.join("runs"), "jsonl")? {
            let run = read_run_log(&path).map_err(|e| StoreError::Corrupt { path: path.clone(), reason: e.to_string() })?;
            if let Some(s) = idx.setups.get_mut(&run.setup_id) {
                s.requirements.entry(run.requirement_id.clone()).or_default().push(run.run_id.clone());
            }
        }
        for s in idx.setups.values_mut() {
            for runs in s.requirements.values_mut() {
                runs.sort();
            }
        }
        Ok(idx)
    }

    fn write_index_of(&self, idx: &StoreIndex) -> Result<(), StoreError> {
        write_atomic(&self.index_path(), &serde_json::to_vec_pretty(idx).expect("index serializes"))
    }

    pub fn index(&self) -> &StoreIndex {
        &self.index
    }

    pub fn create_setup(
        &mut self,
        app_ref: &str,
        requirements: Vec<Requirement>,
    ) -> Result<SetupRecord, StoreError> {
        let id = format!("setup-{:06}", self.next_setup);
        let setup = VerificationSetup {
            id: id.clone(),
            app_ref: app_ref.to_string(),
            requirements: requirements.iter().map(|r| r.id.clone()).collect(),
            created_at: chrono::Utc::now(),
        };
        let rec = SetupRecord { setup, requirements };
        self.write_setup(&rec)?;
        self.next_setup += 1;
        let entry = self.index.setups.entry(id.clone()).or_default();
        entry.app_ref = app_ref.to_string();
        for r in &rec.requirements {
            entry.requirements.entry(r.id.clone()).or_default();
        }
        self.setups.insert(id, rec.clone());
        self.write_index_of(&self.index)?;
        Ok(rec)
    }

    fn write_setup(&self, rec: &SetupRecord) -> Result<(), StoreError> {
        write_atomic(&self.setup_path(&rec.setup.id), &serde_json::to_vec_pretty(rec).expect("setup serializes"))
    }

    pub fn setups(&self) -> impl Iterator<Item = &SetupRecord> {
        self.setups.values()
    }

    pub fn setup(&self, id: &str) -> Option<&SetupRecord> {
        self.setups.get(id)
    }

    /// Replaces one requirement of a setup (matched by id).
    pub fn update_requirement(&mut self, setup_id: &str, req: &Requirement) -> Result<(), StoreError> {
        let mut rec = self.setups.get(setup_id).cloned().ok_or_else(|| StoreError::UnknownSetup(setup_id.into()))?;
        if let Some(slot) = rec.requirements.iter_mut().find(|r| r.id == req.id) {
            *slot = req.clone();
        }
        self.write_setup(&rec)?;
        self.setups.insert(setup_id.to_string(), rec);
        Ok(())
    }

    pub fn allocate_run_id(&mut self) -> String {
        let id = format!("run-{:06}", self.next_run);
        self.next_run += 1;
        id
    }

    /// Makes a terminated run durable and records it in the index.
    pub fn persist_run(&mut self, run: &VerificationRun) -> Result<(), StoreError> {
        if !run.status.is_terminal() {
            return Err(StoreError::NotTerminated(run.run_id.clone()));
        }
        if !self.setups.contains_key(&run.setup_id) {
            return Err(StoreError::UnknownSetup(run.setup_id.clone()));
        }
        write_run_log(&self.run_path(&run.run_id), run)?;
        let runs = self
            .index
            .setups
            .entry(run.setup_id.clone())
            .or_default()
            .requirements
            .entry(run.requirement_id.clone())
            .or_default();
        if let Err(pos) = runs.binary_search(&run.run_id) {
            runs.insert(pos, run.run_id.clone());
        }
        self.next_run = self.next_run.max(numeric_suffix(&run.run_id) + 1);
        self.write_index_of(&self.index)
    }

    pub fn run(&self, run_id: &str) -> Result<Option<VerificationRun>, StoreError> {
        let path = self.run_path(run_id);
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(read_run_log(&path)?))
    }

    pub fn runs_for(&self, setup_id: &str, requirement_id: &str) -> &[String] {
        self.index
            .setups
            .get(setup_id)
            .and_then(|s| s.requirements.get(requirement_id))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Setup owning a stored run.
    pub fn run_setup(&self, run_id: &str) -> Option<(&str, &str)> {
        self.index.setups.iter().find_map(|(sid, s)| {
            s.requirements.iter().find_map(|(rid, runs)| runs.iter().any(|r| r == run_id).then_some((sid.as_str(), rid.as_str())))
        })
    }
}
