use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{ClusterSummary, DiscoveryError, Observer};
use crate::clustering::ClusterSet;
use crate::domain::ClassId;
use crate::ingest::EmbeddingMatrix;
use crate::oracle::{LabelState, Oracle, Phase};
use crate::rng::{substream, Stream};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Good,
    Bad,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterVerdict {
    pub cluster_id: usize,
    pub verdict: Verdict,
    /// The shared label of a good cluster.
    pub class: Option<ClassId>,
    /// Charged-labeled members after probing (and the bad-cluster extras).
    pub annotated: Vec<usize>,
    /// False when the budget ran out before the probe could be topped up.
    pub probed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClusterQuality {
    pub clusters: Vec<ClusterVerdict>,
    pub probe_annotations: usize,
    pub extra_annotations: usize,
}

impl ClusterQuality {
    pub fn good_count(&self) -> usize {
        self.clusters.iter().filter(|c| c.verdict == Verdict::Good).count()
    }

    pub fn bad_count(&self) -> usize {
        self.clusters.len() - self.good_count()
    }

    pub fn good_fraction(&self) -> f64 {
        if self.clusters.is_empty() {
            0.0
        } else {
            self.good_count() as f64 / self.clusters.len() as f64
        }
    }

    pub fn verdict(&self, cluster: usize) -> Verdict {
        self.clusters[cluster].verdict
    }

    pub fn summaries<T>(&self, set: &ClusterSet<T>) -> Vec<ClusterSummary> {
        set.members
            .iter()
            .enumerate()
            .map(|(i, m)| ClusterSummary {
                cluster_id: i,
                size: m.len(),
                verdict: self.clusters.get(i).map(|c| c.verdict),
            })
            .collect()
    }
}

fn charged_members(state: &LabelState, members: &[usize]) -> Vec<usize> {
    members
        .iter()
        .copied()
        .filter(|&r| state.pool.get(r).is_some_and(|e| e.provenance.is_charged()))
        .collect()
}

/// Cluster quality probing. Each cluster is topped up to `p` charged labels
/// (labels from discovery count toward the probe; the top-up points are a
/// seeded random choice of unlabeled members). A fully probed cluster whose
/// labels agree is good; every other cluster is bad and receives `q` more
/// labels on the members farthest from its centroid.
#[allow(clippy::too_many_arguments)]
pub fn cqba<T: Scalar>(
    state: &mut LabelState,
    oracle: &mut Oracle<'_>,
    set: &ClusterSet<T>,
    x: &EmbeddingMatrix<T>,
    p: usize,
    q: usize,
    seed: u64,
    observer: &mut dyn Observer,
) -> Result<ClusterQuality, DiscoveryError> {
    // top-ups are funded greedily in cluster order, all or nothing per cluster
    let mut budget = state.remaining();
    let mut probed = vec![false; set.k()];
    let mut requests = Vec::new();
    for (c, members) in set.members.iter().enumerate() {
        let have = charged_members(state, members).len();
        let need = p.min(members.len()).saturating_sub(have);
        if need > budget {
            continue;
        }
        let mut free: Vec<usize> = members
            .iter()
            .copied()
            .filter(|&r| !state.pool.contains(r))
            .collect();
        free.shuffle(&mut substream(seed, Stream::ClusterProbe, c as u64));
        requests.extend(free.into_iter().take(need).map(|r| (r, Some(c))));
        budget -= need;
        probed[c] = true;
    }
    let probe_annotations = requests.len();
    oracle.annotate(state, &requests, Phase::Cqba)?;
    observer.budget(state.ledger.spent, state.ledger.total);

    let mut clusters: Vec<ClusterVerdict> = set
        .members
        .iter()
        .enumerate()
        .map(|(c, members)| {
            let annotated = charged_members(state, members);
            let classes: BTreeSet<ClassId> = annotated
                .iter()
                .map(|&r| state.pool.get(r).unwrap().class)
                .collect();
            let good = probed[c] && classes.len() == 1;
            ClusterVerdict {
                cluster_id: c,
                verdict: if good { Verdict::Good } else { Verdict::Bad },
                class: if good { classes.first().copied() } else { None },
                annotated,
                probed: probed[c],
            }
        })
        .collect();

    let mut budget = state.remaining();
    let mut requests = Vec::new();
    for v in clusters.iter().filter(|v| v.verdict == Verdict::Bad) {
        let mut far = set.by_centroid_distance(v.cluster_id, x);
        far.reverse();
        let take = q.min(budget);
        let picked: Vec<(usize, Option<usize>)> = far
            .into_iter()
            .filter(|&r| !state.pool.contains(r))
            .take(take)
            .map(|r| (r, Some(v.cluster_id)))
            .collect();
        budget -= picked.len();
        requests.extend(picked);
    }
    let extra_annotations = requests.len();
    for (row, _) in oracle.annotate(state, &requests, Phase::Cqba)? {
        let cluster = set.cluster_of(row).expect("requested from a cluster");
        clusters[cluster].annotated.push(row);
    }
    for v in &mut clusters {
        v.annotated.sort_unstable();
    }
    observer.budget(state.ledger.spent, state.ledger.total);

    let quality = ClusterQuality {
        clusters,
        probe_annotations,
        extra_annotations,
    };
    observer.clusters(&quality.summaries(set));
    Ok(quality)
}
