use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::reqmodel::{Outcome, Requirement, Verdict};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRow {
    pub requirement_id: String,
    /// Empty for a requirement-level row.
    #[serde(default)]
    pub ac_id: String,
    pub label: String,
}

/// Requirement-level and criterion-level labels keyed by id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelFile {
    pub requirements: BTreeMap<String, Outcome>,
    /// Keyed by `requirement_id/ac_id`.
    pub criteria: BTreeMap<String, Verdict>,
}

impl LabelFile {
    pub fn from_rows(rows: impl IntoIterator<Item = LabelRow>) -> Result<Self, EvalError> {
        let mut out = LabelFile::default();
        for (i, row) in rows.into_iter().enumerate() {
            let bad = || EvalError::BadLabel { row: i + 1, label: row.label.clone() };
            let label = row.label.trim();
            if row.ac_id.trim().is_empty() {
                let o = Outcome::parse(label).ok_or_else(bad)?;
                if out.requirements.insert(row.requirement_id.clone(), o).is_some() {
                    return Err(EvalError::DuplicateId(row.requirement_id));
                }
            } else {
                let v = match label {
                    "met" => Verdict::Met,
                    "unmet" => Verdict::Unmet,
                    _ => return Err(bad()),
                };
                let key = format!("{}/{}", row.requirement_id, row.ac_id.trim());
                if out.criteria.insert(key.clone(), v).is_some() {
                    return Err(EvalError::DuplicateId(key));
                }
            }
        }
        Ok(out)
    }

    /// Labels from verified requirements; unverified or failed ones are
    /// left out.
    pub fn from_requirements(reqs: &[Requirement]) -> Self {
        let mut out = LabelFile::default();
        for r in reqs {
            let Some(o) = r.state.outcome() else { continue };
            out.requirements.insert(r.id.clone(), o);
            for c in &r.criteria {
                if c.verdict != Verdict::Unknown {
                    out.criteria.insert(format!("{}/{}", r.id, c.id), c.verdict);
                }
            }
        }
        out
    }

    pub fn rows(&self) -> Vec<LabelRow> {
        let mut rows = Vec::new();
        for (rid, o) in &self.requirements {
            rows.push(LabelRow { requirement_id: rid.clone(), ac_id: String::new(), label: o.as_str().into() });
            let prefix = format!("{rid}/");
            for (key, v) in self.criteria.range(prefix.clone()..).take_while(|(k, _)| k.starts_with(&prefix)) {
                let label = if *v == Verdict::Met { "met" } else { "unmet" };
                rows.push(LabelRow { requirement_id: rid.clone(), ac_id: key[prefix.len()..].into(), label: label.into() });
            }
        }
        rows
    }
}

pub fn parse_labels(reader: impl Read) -> Result<LabelFile, EvalError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let rows = rdr.deserialize::<LabelRow>().collect::<Result<Vec<_>, _>>()?;
    LabelFile::from_rows(rows)
}

pub fn read_labels(path: &Path) -> Result<LabelFile, EvalError> {
    parse_labels(std::fs::File::open(path)?)
}

pub fn write_labels(path: &Path, labels: &LabelFile) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    for row in labels.rows() {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
