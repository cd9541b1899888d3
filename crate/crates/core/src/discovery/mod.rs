//! The discovery pipeline: OOD filtering, iterative novel class detection,
//! cluster quality probing, silver/gold annotation, final training, plus
//! the two few-shot baselines.

mod baselines;
mod cqba;
mod ncd;
mod pipeline;
mod ppas;
mod variant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::ClassifierError;
use crate::clustering::ClusterError;
use crate::domain::AlreadyLabeled;
use crate::eval::EvalError;
use crate::ingest::IngestError;
use crate::ood::OodError;
use crate::oracle::OracleError;

pub use baselines::{gold_few, random_few, Shortfall};
pub use cqba::{cqba, ClusterQuality, ClusterVerdict, Verdict};
pub use ncd::{ncd, NcdExit, NcdOutcome, NcdRound};
pub use pipeline::{run, run_baseline, run_mnid, run_simulated};
pub use ppas::{ppas, PpasOutcome};
pub use variant::{GoldScope, InvalidVariant, SilverScope, StrategyVariant};

#[derive(Debug, Error)]
pub enum DiscoveryError {
    #[error("the OOD set is empty")]
    EmptyOodSet,
    #[error("x must be at least 2, got {0}")]
    PointsPerClusterTooSmall(usize),
    #[error("the initial split needs at least two classes")]
    DegenerateInit,
    #[error("sample of {requested} exceeds the {available} pool points")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("gold_few needs gold labels for every pool point; {0} has none")]
    MissingGold(String),
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Ood(#[from] OodError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

impl From<AlreadyLabeled> for DiscoveryError {
    fn from(e: AlreadyLabeled) -> Self {
        DiscoveryError::Oracle(e.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ood,
    Ncd,
    Cqba,
    Confidence,
    Ppas,
    Baseline,
    Train,
    Evaluate,
    Done,
}

/// Size and verdict of one stored cluster, as shown to an annotator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster_id: usize,
    pub size: usize,
    pub verdict: Option<Verdict>,
}

/// Receives progress while a pipeline runs. Every method defaults to a no-op.
pub trait Observer {
    fn stage(&mut self, _stage: Stage) {}
    fn budget(&mut self, _spent: usize, _total: usize) {}
    fn ncd_round(&mut self, _round: &NcdRound) {}
    fn clusters(&mut self, _clusters: &[ClusterSummary]) {}
}

/// Observer that ignores everything.
pub struct Silent;

impl Observer for Silent {}
