use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary confusion counts with "positive" meaning the class of interest.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn record(&mut self, gold: bool, pred: bool) {
        match (gold, pred) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => {}
        }
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// Harmonic mean of precision and recall, computed from counts as 2tp / (2tp + fp + fn).
    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }

    /// Like [`f1`](Self::f1), but 1 when neither side has any positive.
    pub fn f1_or_one(&self) -> f64 {
        if self.tp + self.fp + self.fn_ == 0 {
            1.0
        } else {
            self.f1()
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// An anomaly-detection answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdLabel {
    Normal,
    Abnormal,
    Invalid,
}

impl AdLabel {
    /// Reads a trimmed answer; anything other than the two labels is `Invalid`.
    pub fn parse(answer: &str, case_insensitive: bool) -> Self {
        let a = answer.trim();
        let eq = |want: &str| {
            if case_insensitive {
                a.eq_ignore_ascii_case(want)
            } else {
                a == want
            }
        };
        if eq("normal") {
            AdLabel::Normal
        } else if eq("abnormal") {
            AdLabel::Abnormal
        } else {
            AdLabel::Invalid
        }
    }
}

/// Precision, recall and F1 with `Abnormal` as the positive class.
///
/// Invalid predictions count as negative predictions.
pub fn binary_prf(gold: &[AdLabel], pred: &[AdLabel]) -> Result<(f64, f64, f64)> {
    if gold.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: gold.len(),
            right: pred.len(),
        });
    }
    let mut c = ConfusionCounts::default();
    for (g, p) in gold.iter().zip(pred) {
        c.record(*g == AdLabel::Abnormal, *p == AdLabel::Abnormal);
    }
    Ok((c.precision(), c.recall(), c.f1()))
}

pub const VC_CATEGORIES: [&str; 6] = ["OID", "LOI", "OBN", "TDA", "CRS", "OBA"];

/// One variable's category within one log.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VariableAnnotation {
    pub log_id: String,
    /// Identifies the variable within its log (e.g. value plus occurrence index).
    pub position: String,
    pub category: String,
}

/// One-vs-rest F1 per category over annotation triples.
///
/// A prediction is correct when the same (log, position) carries the same
/// category in the gold set. Unknown predicted categories score nothing but
/// still leave the gold annotation unmatched.
pub fn category_f1(
    gold: &[VariableAnnotation],
    pred: &[VariableAnnotation],
    categories: &[&str],
) -> BTreeMap<String, f64> {
    let gold_at: HashMap<(&str, &str), &str> = gold
        .iter()
        .map(|a| {
            (
                (a.log_id.as_str(), a.position.as_str()),
                a.category.as_str(),
            )
        })
        .collect();
    let pred_at: HashMap<(&str, &str), &str> = pred
        .iter()
        .map(|a| {
            (
                (a.log_id.as_str(), a.position.as_str()),
                a.category.as_str(),
            )
        })
        .collect();

    let mut counts: BTreeMap<&str, ConfusionCounts> = categories
        .iter()
        .map(|c| (*c, ConfusionCounts::default()))
        .collect();
    for (key, g) in &gold_at {
        let p = pred_at.get(key).copied();
        if let Some(c) = counts.get_mut(g) {
            c.record(true, p == Some(*g));
        }
    }
    for (key, p) in &pred_at {
        let g = gold_at.get(key).copied();
        if let Some(c) = counts.get_mut(p) {
            if g != Some(*p) {
                c.fp += 1;
            }
        }
    }
    counts
        .into_iter()
        .map(|(cat, c)| (cat.to_string(), c.f1()))
        .collect()
}
