use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{DiscoveryError, Observer};
use crate::clustering::{ClusterSet, Clusterer};
use crate::domain::ClassId;
use crate::ingest::EmbeddingMatrix;
use crate::oracle::{LabelState, Oracle, Phase};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NcdRound {
    pub k: usize,
    /// Classes seen for the first time in this round.
    pub new_classes: usize,
    pub annotations: usize,
    /// Cumulative N_new after the round.
    pub n_new: usize,
    pub spent_after: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NcdExit {
    /// N_new fell below ⌊K/2⌋.
    Converged,
    /// A round could cost more than the remaining budget; from then on the
    /// rounds were clustered but not annotated.
    Budget,
    /// The next K exceeds the number of OOD points.
    TooFewPoints,
    /// Every OOD point already carried a label; from then on the rounds were
    /// clustered but not annotated.
    AllLabeled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NcdOutcome<T> {
    pub n_new: usize,
    pub rounds: Vec<NcdRound>,
    /// The last executed clustering; `None` when no round ran.
    pub clusters: Option<ClusterSet<T>>,
    pub exit: NcdExit,
}

impl<T> NcdOutcome<T> {
    pub fn stored_clusters(&self) -> usize {
        self.clusters.as_ref().map_or(0, |c| c.members.len())
    }

    pub fn annotations(&self) -> usize {
        self.rounds.iter().map(|r| r.annotations).sum()
    }
}

/// Novel class detection over the OOD set `os`: cluster with K = 1, 2, 4, …
/// and annotate the `per_cluster` unlabeled points nearest each centroid,
/// while the number of classes found so far is at least ⌊K/2⌋.
#[allow(clippy::too_many_arguments)]
pub fn ncd<T: Scalar>(
    os: &[usize],
    state: &mut LabelState,
    oracle: &mut Oracle<'_>,
    x: &EmbeddingMatrix<T>,
    per_cluster: usize,
    clusterer: &Clusterer,
    seed: u64,
    observer: &mut dyn Observer,
) -> Result<NcdOutcome<T>, DiscoveryError> {
    if os.is_empty() {
        return Err(DiscoveryError::EmptyOodSet);
    }
    if per_cluster < 2 {
        return Err(DiscoveryError::PointsPerClusterTooSmall(per_cluster));
    }
    let mut seen: BTreeSet<ClassId> = state
        .pool
        .iter()
        .filter(|(_, e)| e.provenance.is_charged())
        .map(|(_, e)| e.class)
        .collect();
    let mut k = 1usize;
    let mut n_new = 0usize;
    let mut rounds = Vec::new();
    let mut clusters = None;

    // Why annotation stopped early, if it did.
    let mut halted: Option<NcdExit> = None;
    let exit = loop {
        if n_new < k / 2 {
            break halted.unwrap_or(NcdExit::Converged);
        }
        if k > os.len() {
            break NcdExit::TooFewPoints;
        }
        // The clustering itself is free. Once the budget cannot cover a round
        // (or nothing is left to label) the doubling goes on without
        // annotating, so the stored clusters still outnumber N_new.
        let set = clusterer.cluster(os, x, k, seed, rounds.len() as u64)?;
        if halted.is_none() {
            if per_cluster * k > state.remaining() {
                halted = Some(NcdExit::Budget);
            } else if os.iter().all(|&r| state.pool.contains(r)) {
                halted = Some(NcdExit::AllLabeled);
            }
        }
        let mut labels = Vec::new();
        if halted.is_none() {
            let mut requests = Vec::new();
            for c in 0..set.k() {
                requests.extend(
                    set.by_centroid_distance(c, x)
                        .into_iter()
                        .filter(|&r| !state.pool.contains(r))
                        .take(per_cluster)
                        .map(|r| (r, Some(c))),
                );
            }
            labels = oracle.annotate(state, &requests, Phase::Ncd)?;
            observer.budget(state.ledger.spent, state.ledger.total);
        }
        let mut fresh = 0;
        for (_, class) in &labels {
            if seen.insert(*class) {
                fresh += 1;
            }
        }
        n_new += fresh;
        let round = NcdRound {
            k,
            new_classes: fresh,
            annotations: labels.len(),
            n_new,
            spent_after: state.ledger.spent,
        };
        observer.ncd_round(&round);
        rounds.push(round);
        clusters = Some(set);
        k *= 2;
    };

    Ok(NcdOutcome {
        n_new,
        rounds,
        clusters,
        exit,
    })
}
