use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::labels::LabelFile;
use super::EvalError;
use crate::reqmodel::{Outcome, Verdict};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

impl Prf1 {
    /// F1 from a precision/recall pair, 0 when both are 0.
    pub fn from_pr(precision: f64, recall: f64) -> Self {
        Self { precision, recall, f1: ratio(2.0 * precision * recall, precision + recall) }
    }
}

/// Precision, recall and F1; any 0/0 is taken as 0.
pub fn prf1(c: Counts) -> Prf1 {
    let p = ratio(c.tp as f64, (c.tp + c.fp) as f64);
    let r = ratio(c.tp as f64, (c.tp + c.fn_) as f64);
    Prf1::from_pr(p, r)
}

/// Per-class TP/FP/FN over ids present in both maps.
pub fn confusion<L: Ord + Copy>(
    gold: &BTreeMap<String, L>,
    pred: &BTreeMap<String, L>,
    classes: &[L],
) -> Result<BTreeMap<L, Counts>, EvalError> {
    let only_gold: Vec<String> = gold.keys().filter(|k| !pred.contains_key(*k)).cloned().collect();
    let only_pred: Vec<String> = pred.keys().filter(|k| !gold.contains_key(*k)).cloned().collect();
    if !only_gold.is_empty() || !only_pred.is_empty() {
        return Err(EvalError::IdMismatch { only_gold, only_pred });
    }
    let mut out: BTreeMap<L, Counts> = classes.iter().map(|c| (*c, Counts::default())).collect();
    for (id, g) in gold {
        let p = pred[id];
        if *g == p {
            out.entry(p).or_default().tp += 1;
        } else {
            out.entry(p).or_default().fp += 1;
            out.entry(*g).or_default().fn_ += 1;
        }
    }
    Ok(out)
}

/// Requirement classes in report order.
pub const REQ_CLASSES: [Outcome; 3] = [Outcome::Met, Outcome::Unmet, Outcome::PartiallyMet];
/// Criterion classes in report order.
pub const AC_CLASSES: [Verdict; 2] = [Verdict::Met, Verdict::Unmet];

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub req_met: Prf1,
    pub req_unmet: Prf1,
    pub req_partial: Prf1,
    pub ac_met: Prf1,
    pub ac_unmet: Prf1,
}

impl Scores {
    pub fn as_array(&self) -> [Prf1; 5] {
        [self.req_met, self.req_unmet, self.req_partial, self.ac_met, self.ac_unmet]
    }

    pub fn from_array(a: [Prf1; 5]) -> Self {
        Self { req_met: a[0], req_unmet: a[1], req_partial: a[2], ac_met: a[3], ac_unmet: a[4] }
    }
}

pub fn score_labels(gold: &LabelFile, pred: &LabelFile) -> Result<Scores, EvalError> {
    let req = confusion(&gold.requirements, &pred.requirements, &REQ_CLASSES)?;
    let ac = confusion(&gold.criteria, &pred.criteria, &AC_CLASSES)?;
    Ok(Scores {
        req_met: prf1(req[&Outcome::Met]),
        req_unmet: prf1(req[&Outcome::Unmet]),
        req_partial: prf1(req[&Outcome::PartiallyMet]),
        ac_met: prf1(ac[&Verdict::Met]),
        ac_unmet: prf1(ac[&Verdict::Unmet]),
    })
}
