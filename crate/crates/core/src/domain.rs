//! Shared domain types: records, class vocabulary, the budget ledger and the
//! labeled pool.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Label carried by records whose gold class is not known (live mode).
pub const UNKNOWN_LABEL: &str = "?";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Init,
    Pool,
    Test,
}

impl Split {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "init" => Some(Split::Init),
            "pool" => Some(Split::Pool),
            "test" => Some(Split::Test),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Init => "init",
            Split::Pool => "pool",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub id: String,
    pub text: String,
    #[serde(rename = "label")]
    pub gold_label: String,
    pub split: Split,
}

impl UtteranceRecord {
    pub fn has_gold(&self) -> bool {
        !self.gold_label.is_empty() && self.gold_label != UNKNOWN_LABEL
    }
}

/// Dense class index into a [`ClassVocabulary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub usize);

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Bidirectional label ↔ index map. Indices are dense and assigned in
/// insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassVocabulary {
    names: Vec<String>,
    known_at_start: Vec<bool>,
    #[serde(skip)]
    index: HashMap<String, ClassId>,
}

impl ClassVocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<ClassId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: ClassId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Returns the existing index or appends a new class (not known at start).
    pub fn intern(&mut self, name: &str) -> ClassId {
        if let Some(id) = self.get(name) {
            return id;
        }
        let id = ClassId(self.names.len());
        self.names.push(name.to_owned());
        self.known_at_start.push(false);
        self.index.insert(name.to_owned(), id);
        id
    }

    pub fn mark_known(&mut self, id: ClassId) {
        self.known_at_start[id.0] = true;
    }

    pub fn is_known(&self, id: ClassId) -> bool {
        self.known_at_start[id.0]
    }

    pub fn known_count(&self) -> usize {
        self.known_at_start.iter().filter(|&&k| k).count()
    }

    pub fn unknown_classes(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.known_at_start
            .iter()
            .enumerate()
            .filter(|(_, &k)| !k)
            .map(|(i, _)| ClassId(i))
    }

    /// Rebuilds the lookup table after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), ClassId(i)))
            .collect();
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BudgetError {
    #[error("budget exhausted: requested {requested}, remaining {remaining}")]
    Exhausted { requested: usize, remaining: usize },
    #[error("budget {total} is smaller than the {pre_spent} initial labels")]
    Infeasible { total: usize, pre_spent: usize },
}

/// Gold-label budget. `total` counts the initial labels, which are charged up
/// front.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetLedger {
    pub total: usize,
    pub spent: usize,
}

impl BudgetLedger {
    pub fn new(total: usize, pre_spent: usize) -> Result<Self, BudgetError> {
        if pre_spent > total {
            return Err(BudgetError::Infeasible { total, pre_spent });
        }
        Ok(Self { total, spent: pre_spent })
    }

    pub fn remaining(&self) -> usize {
        self.total - self.spent
    }

    pub fn charge(&mut self, n: usize) -> Result<(), BudgetError> {
        if n > self.remaining() {
            return Err(BudgetError::Exhausted {
                requested: n,
                remaining: self.remaining(),
            });
        }
        self.spent += n;
        Ok(())
    }
}

/// Free-standing form of [`BudgetLedger::remaining`].
pub fn remaining(ledger: &BudgetLedger) -> usize {
    ledger.remaining()
}

/// Where a label came from. Everything but `Silver` was charged to the budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Initial,
    Ncd,
    Cqba,
    Gold,
    Silver,
}

impl Provenance {
    pub fn is_charged(self) -> bool {
        self != Provenance::Silver
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub class: ClassId,
    pub provenance: Provenance,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("point {0} is already labeled")]
pub struct AlreadyLabeled(pub usize);

/// The growing labeled set, keyed by corpus row.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPool {
    entries: BTreeMap<usize, PoolEntry>,
}

impl LabeledPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        row: usize,
        class: ClassId,
        provenance: Provenance,
    ) -> Result<(), AlreadyLabeled> {
        if self.entries.contains_key(&row) {
            return Err(AlreadyLabeled(row));
        }
        self.entries.insert(row, PoolEntry { class, provenance });
        Ok(())
    }

    pub fn get(&self, row: usize) -> Option<&PoolEntry> {
        self.entries.get(&row)
    }

    pub fn contains(&self, row: usize) -> bool {
        self.entries.contains_key(&row)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &PoolEntry)> {
        self.entries.iter().map(|(&r, e)| (r, e))
    }

    pub fn charged_len(&self) -> usize {
        self.entries
            .values()
            .filter(|e| e.provenance.is_charged())
            .count()
    }

    pub fn count(&self, provenance: Provenance) -> usize {
        self.entries
            .values()
            .filter(|e| e.provenance == provenance)
            .count()
    }

    /// Rows and labels in row order, i.e. the training set.
    pub fn training_pairs(&self) -> Vec<(usize, ClassId)> {
        self.entries.iter().map(|(&r, e)| (r, e.class)).collect()
    }

    pub fn has_charged_label(&self, class: ClassId) -> bool {
        self.entries
            .values()
            .any(|e| e.class == class && e.provenance.is_charged())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn remaining_is_total_minus_spent() {
        assert_eq!(remaining(&BudgetLedger { total: 70, spent: 50 }), 20);
        assert_eq!(remaining(&BudgetLedger { total: 70, spent: 70 }), 0);
        // 64 classes, kappa 10, 100 initial labels
        assert_eq!(remaining(&BudgetLedger::new(64 * 10, 100).unwrap()), 540);
    }

    #[test]
    fn charge_is_atomic() {
        let mut l = BudgetLedger::new(70, 68).unwrap();
        assert_eq!(
            l.charge(3),
            Err(BudgetError::Exhausted { requested: 3, remaining: 2 })
        );
        assert_eq!(l.spent, 68);
        l.charge(2).unwrap();
        assert_eq!(l.remaining(), 0);
    }

    #[test]
    fn infeasible_budget_rejected() {
        assert!(matches!(
            BudgetLedger::new(10, 11),
            Err(BudgetError::Infeasible { .. })
        ));
    }

    #[test]
    fn pool_rejects_double_entries() {
        let mut p = LabeledPool::new();
        p.insert(3, ClassId(0), Provenance::Gold).unwrap();
        assert_eq!(
            p.insert(3, ClassId(1), Provenance::Silver),
            Err(AlreadyLabeled(3))
        );
        p.insert(4, ClassId(1), Provenance::Silver).unwrap();
        assert_eq!(p.charged_len(), 1);
        assert_eq!(p.count(Provenance::Silver), 1);
    }

    #[test]
    fn vocabulary_interns_densely() {
        let mut v = ClassVocabulary::new();
        let a = v.intern("GetWeather");
        let b = v.intern("RateBook");
        assert_eq!(v.intern("GetWeather"), a);
        assert_eq!((a, b), (ClassId(0), ClassId(1)));
        v.mark_known(a);
        assert_eq!(v.unknown_classes().collect::<Vec<_>>(), vec![b]);
        let mut round: ClassVocabulary =
            serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        round.reindex();
        assert_eq!(round, v);
    }
}
