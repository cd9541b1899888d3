//! Metrics and the run report.

mod report;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{ClassVocabulary, LabeledPool, Provenance};
use crate::ingest::Corpus;

pub use report::*;

/// χ² critical value for one degree of freedom at p = 0.05.
pub const CHI2_1DF_05: f64 = 3.841;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no predictions to score")]
    Empty,
    #[error("point {0} has no gold label")]
    MissingGold(String),
}

/// F1 from counts; 0 when the class has neither predictions nor support.
pub fn f1_score(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Accuracy and macro-F1. Per-class F1 is averaged over the classes present
/// in `gold`; a gold class that is never predicted correctly contributes 0.
pub fn accuracy_macro_f1<L: Ord + Copy>(pred: &[L], gold: &[L]) -> Result<(f64, f64), EvalError> {
    if pred.len() != gold.len() {
        return Err(EvalError::LengthMismatch(pred.len(), gold.len()));
    }
    if gold.is_empty() {
        return Err(EvalError::Empty);
    }
    // per class: (tp, fp, fn)
    let mut counts: BTreeMap<L, (usize, usize, usize)> = BTreeMap::new();
    let mut correct = 0;
    for (&p, &g) in pred.iter().zip(gold) {
        if p == g {
            correct += 1;
            counts.entry(g).or_default().0 += 1;
        } else {
            counts.entry(p).or_default().1 += 1;
            counts.entry(g).or_default().2 += 1;
        }
    }
    let present: BTreeSet<L> = gold.iter().copied().collect();
    let f1_sum: f64 = present
        .iter()
        .map(|c| {
            let (tp, fp, fn_) = counts[c];
            f1_score(tp, fp, fn_)
        })
        .sum();
    Ok((
        correct as f64 / gold.len() as f64,
        f1_sum / present.len() as f64,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemar {
    /// A correct, B wrong.
    pub b: usize,
    /// A wrong, B correct.
    pub c: usize,
    pub chi_square: f64,
    pub significant_at_05: bool,
    pub continuity_correction: bool,
}

/// Continuity-corrected McNemar statistic from the discordant counts.
pub fn mcnemar_from_counts(b: usize, c: usize) -> McNemar {
    let chi_square = if b + c == 0 {
        0.0
    } else {
        let diff = (b.abs_diff(c) as f64 - 1.0).max(0.0);
        diff * diff / (b + c) as f64
    };
    McNemar {
        b,
        c,
        chi_square,
        significant_at_05: chi_square > CHI2_1DF_05,
        continuity_correction: true,
    }
}

pub fn mcnemar<L: PartialEq>(pred_a: &[L], pred_b: &[L], gold: &[L]) -> Result<McNemar, EvalError> {
    if pred_a.len() != gold.len() {
        return Err(EvalError::LengthMismatch(pred_a.len(), gold.len()));
    }
    if pred_b.len() != gold.len() {
        return Err(EvalError::LengthMismatch(pred_b.len(), gold.len()));
    }
    let (mut b, mut c) = (0, 0);
    for ((a, bb), g) in pred_a.iter().zip(pred_b).zip(gold) {
        match (a == g, bb == g) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    Ok(mcnemar_from_counts(b, c))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discovery {
    pub found: usize,
    pub total_unknown: usize,
    /// `found / total_unknown`; 1 when there was nothing to find.
    pub rate: f64,
}

/// Counts initially unknown classes that hold at least one charged label.
pub fn discovery_rate(pool: &LabeledPool, vocab: &ClassVocabulary) -> Discovery {
    let total_unknown = vocab.unknown_classes().count();
    let found = vocab
        .unknown_classes()
        .filter(|&c| pool.has_charged_label(c))
        .count();
    Discovery {
        found,
        total_unknown,
        rate: if total_unknown == 0 {
            1.0
        } else {
            found as f64 / total_unknown as f64
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SilverSummary {
    pub count: usize,
    pub correct: usize,
    pub precision: f64,
    /// Mean silver labels per class that received any.
    pub mean_per_class: f64,
}

/// Precision of silver labels against corpus gold; `None` when there are no
/// silver labels.
pub fn silver_precision(pool: &LabeledPool, corpus: &Corpus) -> Result<Option<SilverSummary>, EvalError> {
    let mut count = 0;
    let mut correct = 0;
    let mut per_class: BTreeMap<usize, usize> = BTreeMap::new();
    for (row, e) in pool.iter().filter(|(_, e)| e.provenance == Provenance::Silver) {
        let gold = corpus
            .gold(row)
            .ok_or_else(|| EvalError::MissingGold(corpus.record(row).id.clone()))?;
        // pool class ids come from the run vocabulary, which extends the corpus one
        count += 1;
        if gold == e.class {
            correct += 1;
        }
        *per_class.entry(e.class.0).or_default() += 1;
    }
    if count == 0 {
        return Ok(None);
    }
    Ok(Some(SilverSummary {
        count,
        correct,
        precision: correct as f64 / count as f64,
        mean_per_class: count as f64 / per_class.len() as f64,
    }))
}
