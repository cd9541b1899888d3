use std::collections::VecDeque;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{ClusterQuality, DiscoveryError, GoldScope, Observer, SilverScope, StrategyVariant, Verdict};
use crate::classifier::ConfidenceTable;
use crate::clustering::ClusterSet;
use crate::domain::ClassId;
use crate::ingest::EmbeddingMatrix;
use crate::oracle::{LabelState, Oracle, Phase};
use crate::rng::{substream, Stream};
use crate::scalar::{cosine, Scalar};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PpasOutcome {
    pub silver: Vec<(usize, ClassId)>,
    /// Gold labels in the order they were bought.
    pub gold: Vec<(usize, ClassId)>,
    /// Clusters the gold loop drew from.
    pub gold_clusters: Vec<usize>,
}

/// Silver gate: a member of a good cluster is labeled with the cluster's class
/// when its confidence is at least `th` and its mean cosine similarity to the
/// charged labels of that class is at least `tau`.
fn silver_candidates<T: Scalar>(
    state: &LabelState,
    all_cs: &ConfidenceTable<T>,
    quality: &ClusterQuality,
    set: &ClusterSet<T>,
    x: &EmbeddingMatrix<T>,
    th: f64,
    tau: f64,
) -> Vec<(usize, ClassId)> {
    let mut out = Vec::new();
    for v in quality.clusters.iter().filter(|v| v.verdict == Verdict::Good) {
        let class = v.class.expect("good clusters carry a class");
        let refs: Vec<usize> = state
            .pool
            .iter()
            .filter(|(_, e)| e.class == class && e.provenance.is_charged())
            .map(|(r, _)| r)
            .collect();
        if refs.is_empty() {
            continue;
        }
        for &row in &set.members[v.cluster_id] {
            if state.pool.contains(row) {
                continue;
            }
            let Some(cs) = all_cs.confidence(row) else {
                continue;
            };
            if cs.to_f64_lossy() < th {
                continue;
            }
            let sim: f64 = refs
                .iter()
                .map(|&r| cosine(x.row(row), x.row(r)).to_f64_lossy())
                .sum::<f64>()
                / refs.len() as f64;
            if sim >= tau {
                out.push((row, class));
            }
        }
    }
    out
}

/// Silver labeling followed by the gold loop: clusters in the variant's gold
/// scope are visited round-robin in ascending index, each visit buying one
/// label (least confident first, or seeded random for `AnyPointBad`), until
/// the budget or the eligible points run out.
#[allow(clippy::too_many_arguments)]
pub fn ppas<T: Scalar>(
    state: &mut LabelState,
    oracle: &mut Oracle<'_>,
    all_cs: &ConfidenceTable<T>,
    quality: &ClusterQuality,
    set: &ClusterSet<T>,
    x: &EmbeddingMatrix<T>,
    th: f64,
    tau: f64,
    variant: StrategyVariant,
    seed: u64,
    observer: &mut dyn Observer,
) -> Result<PpasOutcome, DiscoveryError> {
    let mut outcome = PpasOutcome::default();

    if variant.silver() != SilverScope::None {
        let th = variant.effective_threshold(th);
        outcome.silver = silver_candidates(state, all_cs, quality, set, x, th, tau);
        for &(row, class) in &outcome.silver {
            state.add_silver(row, class)?;
        }
    }

    let bad: Vec<usize> = (0..set.k())
        .filter(|&c| quality.verdict(c) == Verdict::Bad)
        .collect();
    let scope: Vec<usize> = match variant.gold() {
        GoldScope::None => Vec::new(),
        GoldScope::AnyPointBad | GoldScope::LowConfBad => bad,
        GoldScope::LowConfAny => (0..set.k()).collect(),
        GoldScope::LowConfBadWithFallback if bad.is_empty() => (0..set.k()).collect(),
        GoldScope::LowConfBadWithFallback => bad,
    };
    outcome.gold_clusters = scope.clone();

    let mut queues: Vec<(usize, VecDeque<usize>)> = scope
        .into_iter()
        .map(|c| {
            let mut rows: Vec<usize> = set.members[c]
                .iter()
                .copied()
                .filter(|&r| !state.pool.contains(r))
                .collect();
            if variant.gold() == GoldScope::AnyPointBad {
                rows.shuffle(&mut substream(seed, Stream::GoldAnyPoint, c as u64));
            } else {
                let cs = |r: usize| all_cs.confidence(r).map_or(f64::INFINITY, |v| v.to_f64_lossy());
                rows.sort_by(|&a, &b| cs(a).total_cmp(&cs(b)).then(a.cmp(&b)));
            }
            (c, rows.into())
        })
        .collect();

    while state.remaining() > 0 {
        let mut batch = Vec::new();
        for (c, q) in queues.iter_mut() {
            if batch.len() == state.remaining() {
                break;
            }
            if let Some(r) = q.pop_front() {
                batch.push((r, Some(*c)));
            }
        }
        if batch.is_empty() {
            break;
        }
        outcome.gold.extend(oracle.annotate(state, &batch, Phase::Gold)?);
        observer.budget(state.ledger.spent, state.ledger.total);
    }
    Ok(outcome)
}
