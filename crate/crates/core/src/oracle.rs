//! The oracle abstraction. Every gold label in a run is obtained through
//! [`Oracle::annotate`], which checks and charges the budget ledger.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    AlreadyLabeled, BudgetError, BudgetLedger, ClassId, ClassVocabulary, LabeledPool, Provenance,
    UNKNOWN_LABEL,
};
use crate::ingest::Corpus;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Ncd,
    Cqba,
    Gold,
    Baseline,
}

impl Phase {
    fn provenance(self) -> Provenance {
        match self {
            Phase::Ncd => Provenance::Ncd,
            Phase::Cqba => Provenance::Cqba,
            Phase::Gold | Phase::Baseline => Provenance::Gold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    SimulatedGold,
    LiveQueue,
}

/// One point handed to a label source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelQuery {
    pub row: usize,
    pub point_id: String,
    pub text: String,
    pub phase: Phase,
    pub cluster_id: Option<usize>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error(transparent)]
    Budget(#[from] BudgetError),
    #[error("unknown point {0}")]
    UnknownPoint(String),
    #[error(transparent)]
    AlreadyLabeled(#[from] AlreadyLabeled),
    #[error("point {0} has no gold label")]
    MissingGold(String),
    #[error("invalid label {label:?} for point {point}")]
    InvalidLabel { point: String, label: String },
    #[error("label source returned {got} answers for {asked} queries")]
    AnswerCount { asked: usize, got: usize },
    #[error("label source disconnected")]
    Disconnected,
}

/// Something that can answer label queries: the corpus gold labels or a human.
pub trait LabelSource: Send {
    fn backend(&self) -> Backend;

    /// Returns one label per query, in order. May block.
    fn answer(&mut self, queries: &[LabelQuery]) -> Result<Vec<String>, OracleError>;
}

/// Answers with the corpus gold labels.
#[derive(Debug, Clone)]
pub struct SimulatedGold {
    labels: Vec<String>,
}

impl SimulatedGold {
    pub fn new(corpus: &Corpus) -> Self {
        Self {
            labels: corpus.records().iter().map(|r| r.gold_label.clone()).collect(),
        }
    }
}

impl LabelSource for SimulatedGold {
    fn backend(&self) -> Backend {
        Backend::SimulatedGold
    }

    fn answer(&mut self, queries: &[LabelQuery]) -> Result<Vec<String>, OracleError> {
        queries
            .iter()
            .map(|q| match self.labels.get(q.row) {
                Some(l) if !l.is_empty() && l != UNKNOWN_LABEL => Ok(l.clone()),
                _ => Err(OracleError::MissingGold(q.point_id.clone())),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetEvent {
    pub phase: Phase,
    pub count: usize,
    pub spent_after: usize,
}

/// Mutable label state of a run: vocabulary, labeled pool, ledger and the
/// charge log.
#[derive(Debug, Clone)]
pub struct LabelState {
    pub vocab: ClassVocabulary,
    pub pool: LabeledPool,
    pub ledger: BudgetLedger,
    pub trace: Vec<BudgetEvent>,
}

impl LabelState {
    /// Seeds the pool with the initial split, charged up front.
    pub fn with_initial(
        corpus: &Corpus,
        init_rows: &[usize],
        budget: usize,
    ) -> Result<Self, OracleError> {
        let ledger = BudgetLedger::new(budget, init_rows.len())?;
        let mut pool = LabeledPool::new();
        for &r in init_rows {
            let class = corpus
                .gold(r)
                .ok_or_else(|| OracleError::MissingGold(corpus.record(r).id.clone()))?;
            pool.insert(r, class, Provenance::Initial)?;
        }
        Ok(Self {
            vocab: corpus.vocabulary().clone(),
            pool,
            ledger,
            trace: Vec::new(),
        })
    }

    pub fn add_silver(&mut self, row: usize, class: ClassId) -> Result<(), AlreadyLabeled> {
        self.pool.insert(row, class, Provenance::Silver)
    }

    pub fn remaining(&self) -> usize {
        self.ledger.remaining()
    }
}

/// Handle through which labels are bought.
pub struct Oracle<'a> {
    corpus: &'a Corpus,
    source: &'a mut dyn LabelSource,
}

impl<'a> Oracle<'a> {
    pub fn new(corpus: &'a Corpus, source: &'a mut dyn LabelSource) -> Self {
        Self { corpus, source }
    }

    pub fn backend(&self) -> Backend {
        self.source.backend()
    }

    pub fn corpus(&self) -> &'a Corpus {
        self.corpus
    }

    /// Buys labels for `requests` (row, cluster). The whole batch is checked
    /// before anything is revealed; on success the ledger is charged by the
    /// batch size and every row enters the pool.
    pub fn annotate(
        &mut self,
        state: &mut LabelState,
        requests: &[(usize, Option<usize>)],
        phase: Phase,
    ) -> Result<Vec<(usize, ClassId)>, OracleError> {
        if requests.is_empty() {
            return Ok(Vec::new());
        }
        let mut seen = std::collections::HashSet::with_capacity(requests.len());
        for &(row, _) in requests {
            if row >= self.corpus.len() {
                return Err(OracleError::UnknownPoint(format!("row {row}")));
            }
            if state.pool.contains(row) || !seen.insert(row) {
                return Err(AlreadyLabeled(row).into());
            }
        }
        if requests.len() > state.ledger.remaining() {
            return Err(BudgetError::Exhausted {
                requested: requests.len(),
                remaining: state.ledger.remaining(),
            }
            .into());
        }
        let queries: Vec<LabelQuery> = requests
            .iter()
            .map(|&(row, cluster_id)| {
                let rec = self.corpus.record(row);
                LabelQuery {
                    row,
                    point_id: rec.id.clone(),
                    text: rec.text.clone(),
                    phase,
                    cluster_id,
                }
            })
            .collect();
        let answers = self.source.answer(&queries)?;
        if answers.len() != queries.len() {
            return Err(OracleError::AnswerCount {
                asked: queries.len(),
                got: answers.len(),
            });
        }
        if let Some((q, a)) = queries
            .iter()
            .zip(&answers)
            .find(|(_, a)| a.trim().is_empty() || a.as_str() == UNKNOWN_LABEL)
        {
            return Err(OracleError::InvalidLabel {
                point: q.point_id.clone(),
                label: a.clone(),
            });
        }
        state.ledger.charge(queries.len())?;
        state.trace.push(BudgetEvent {
            phase,
            count: queries.len(),
            spent_after: state.ledger.spent,
        });
        let provenance = phase.provenance();
        let mut out = Vec::with_capacity(queries.len());
        for (q, a) in queries.iter().zip(answers) {
            let class = state.vocab.intern(a.trim());
            state.pool.insert(q.row, class, provenance)?;
            out.push((q.row, class));
        }
        Ok(out)
    }

    /// Same as [`Oracle::annotate`] but addressed by point id.
    pub fn annotate_ids(
        &mut self,
        state: &mut LabelState,
        ids: &[&str],
        phase: Phase,
    ) -> Result<Vec<(String, ClassId)>, OracleError> {
        let rows = ids
            .iter()
            .map(|id| {
                self.corpus
                    .row_of(id)
                    .map(|r| (r, None))
                    .ok_or_else(|| OracleError::UnknownPoint((*id).to_owned()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let labels = self.annotate(state, &rows, phase)?;
        Ok(labels
            .into_iter()
            .map(|(r, c)| (self.corpus.record(r).id.clone(), c))
            .collect())
    }
}
