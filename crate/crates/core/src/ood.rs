//! Out-of-domain filtering: decide which pool points fall outside the
//! classes present in the initial labels.
//!
//! Three detectors are available:
//! - `msp`: softmax regression on the initial labels, flag when the maximum
//!   probability is strictly below `msp_threshold`;
//! - `doc`: one-vs-rest sigmoid classifiers with a per-class threshold
//!   `max(0.5, mean - 3·std)` of the in-class training scores, flag when every
//!   class score is below its threshold;
//! - `proto`: nearest class prototype (mean embedding), flag when the
//!   distance exceeds `proto_margin` times the largest training distance of a
//!   point to its own prototype.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{fit, predict, ClassifierError, TrainConfig};
use crate::clustering::mean_of;
use crate::domain::{ClassId, Split};
use crate::eval::{accuracy_macro_f1, f1_score};
use crate::ingest::{Corpus, EmbeddingMatrix};
use crate::scalar::{dot, sq_dist, Scalar};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OodError {
    #[error("initial labels cover fewer than two classes")]
    DegenerateLabels,
    #[error("unknown OOD method {0:?}")]
    UnknownMethod(String),
    #[error("pool point {0} has no gold label")]
    MissingGold(String),
    #[error(transparent)]
    Classifier(ClassifierError),
}

impl From<ClassifierError> for OodError {
    fn from(e: ClassifierError) -> Self {
        match e {
            ClassifierError::DegenerateLabels => OodError::DegenerateLabels,
            other => OodError::Classifier(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OodMethod {
    #[default]
    Msp,
    Doc,
    Proto,
}

impl FromStr for OodMethod {
    type Err = OodError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "msp" => Ok(OodMethod::Msp),
            "doc" => Ok(OodMethod::Doc),
            "proto" => Ok(OodMethod::Proto),
            other => Err(OodError::UnknownMethod(other.to_owned())),
        }
    }
}

fn default_msp_threshold() -> f64 {
    0.5
}
fn default_proto_margin() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodConfig {
    #[serde(default)]
    pub method: OodMethod,
    #[serde(default = "default_msp_threshold")]
    pub msp_threshold: f64,
    #[serde(default = "default_proto_margin")]
    pub proto_margin: f64,
}

impl Default for OodConfig {
    fn default() -> Self {
        Self {
            method: OodMethod::Msp,
            msp_threshold: default_msp_threshold(),
            proto_margin: default_proto_margin(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OodScore {
    pub score: f64,
    pub is_ood: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodVerdict {
    pub method: OodMethod,
    pub entries: BTreeMap<usize, OodScore>,
}

impl OodVerdict {
    /// Rows flagged out-of-domain, ascending.
    pub fn ood_rows(&self) -> Vec<usize> {
        self.entries
            .iter()
            .filter(|(_, s)| s.is_ood)
            .map(|(&r, _)| r)
            .collect()
    }
}

/// Runs the configured detector. `init` holds (row, class) pairs of the
/// initial labels.
pub fn oodd<T: Scalar>(
    init: &[(usize, ClassId)],
    pool_rows: &[usize],
    x: &EmbeddingMatrix<T>,
    cfg: &OodConfig,
    train: &TrainConfig,
) -> Result<OodVerdict, OodError> {
    let mut classes: Vec<ClassId> = init.iter().map(|&(_, c)| c).collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(OodError::DegenerateLabels);
    }
    let init_rows = init.iter().map(|&(r, _)| r);
    if let Some(r) = init_rows.chain(pool_rows.iter().copied()).find(|&r| r >= x.n()) {
        return Err(ClassifierError::UnknownPoint(r).into());
    }
    let entries = match cfg.method {
        OodMethod::Msp => {
            let model = fit(init, x, train)?.model;
            let table = predict(&model, pool_rows, x)?;
            table
                .entries
                .iter()
                .map(|(&r, c)| {
                    let score = c.confidence.to_f64_lossy();
                    (r, OodScore { score, is_ood: score < cfg.msp_threshold })
                })
                .collect()
        }
        OodMethod::Doc => doc_scores(init, &classes, pool_rows, x, train)?,
        OodMethod::Proto => proto_scores(init, &classes, pool_rows, x, cfg.proto_margin),
    };
    Ok(OodVerdict {
        method: cfg.method,
        entries,
    })
}

fn sigmoid<T: Scalar>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

/// Binary logistic regression by full-batch gradient descent, same step
/// control as the softmax trainer. Returns (weights, bias).
fn fit_sigmoid<T: Scalar>(
    rows: &[usize],
    targets: &[bool],
    x: &EmbeddingMatrix<T>,
    cfg: &TrainConfig,
) -> (Vec<T>, T) {
    let d = x.dim();
    let n = T::from_usize_lossy(rows.len());
    let l2 = T::from_f64_lossy(cfg.l2_penalty);
    let half = T::from_f64_lossy(0.5);
    let eps = T::min_positive_value();
    let eval = |w: &[T], b: T| {
        let mut gw = vec![T::zero(); d];
        let mut gb = T::zero();
        let mut loss = T::zero();
        for (&r, &t) in rows.iter().zip(targets) {
            let f = x.row(r);
            let p = sigmoid(dot(w, f) + b);
            let y = if t { T::one() } else { T::zero() };
            loss = loss - if t { p.max(eps).ln() } else { (T::one() - p).max(eps).ln() };
            let err = p - y;
            gb = gb + err;
            for (g, &v) in gw.iter_mut().zip(f) {
                *g = *g + err * v;
            }
        }
        let reg = w.iter().fold(T::zero(), |a, &v| a + v * v);
        gw.iter_mut().zip(w).for_each(|(g, &v)| *g = *g / n + l2 * v);
        (loss / n + half * l2 * reg, gw, gb / n)
    };
    let mut w = vec![T::zero(); d];
    let mut b = T::zero();
    let mut lr = T::from_f64_lossy(cfg.learning_rate);
    let (mut cur, mut gw, mut gb) = eval(&w, b);
    let mut stalled = 0;
    for _ in 0..cfg.epochs {
        let nw: Vec<T> = w.iter().zip(&gw).map(|(&a, &g)| a - lr * g).collect();
        let nb = b - lr * gb;
        let (nl, ngw, ngb) = eval(&nw, nb);
        if nl.is_finite() && nl <= cur {
            stalled = if cur - nl <= T::from_f64_lossy(1e-10) { stalled + 1 } else { 0 };
            w = nw;
            b = nb;
            cur = nl;
            gw = ngw;
            gb = ngb;
        } else {
            lr = lr * half;
            stalled += 1;
        }
        if stalled >= cfg.early_stop_patience.max(1) {
            break;
        }
    }
    (w, b)
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn doc_scores<T: Scalar>(
    init: &[(usize, ClassId)],
    classes: &[ClassId],
    pool_rows: &[usize],
    x: &EmbeddingMatrix<T>,
    train: &TrainConfig,
) -> Result<BTreeMap<usize, OodScore>, OodError> {
    train.validate()?;
    let mut init = init.to_vec();
    init.sort_unstable();
    let rows: Vec<usize> = init.iter().map(|&(r, _)| r).collect();
    let detectors: Vec<(Vec<T>, T, f64)> = classes
        .iter()
        .map(|&c| {
            let targets: Vec<bool> = init.iter().map(|&(_, l)| l == c).collect();
            let (w, b) = fit_sigmoid(&rows, &targets, x, train);
            let own: Vec<f64> = init
                .iter()
                .filter(|&&(_, l)| l == c)
                .map(|&(r, _)| sigmoid(dot(&w, x.row(r)) + b).to_f64_lossy())
                .collect();
            let (mean, std) = mean_std(&own);
            (w, b, (mean - 3.0 * std).max(0.5))
        })
        .collect();
    Ok(pool_rows
        .iter()
        .map(|&r| {
            let margin = detectors
                .iter()
                .map(|(w, b, t)| sigmoid(dot(w, x.row(r)) + *b).to_f64_lossy() - t)
                .fold(f64::NEG_INFINITY, f64::max);
            (r, OodScore { score: margin, is_ood: margin < 0.0 })
        })
        .collect())
}

fn proto_scores<T: Scalar>(
    init: &[(usize, ClassId)],
    classes: &[ClassId],
    pool_rows: &[usize],
    x: &EmbeddingMatrix<T>,
    margin: f64,
) -> BTreeMap<usize, OodScore> {
    let protos: Vec<Vec<T>> = classes
        .iter()
        .map(|&c| {
            let rows: Vec<usize> = init.iter().filter(|(_, l)| *l == c).map(|&(r, _)| r).collect();
            mean_of(&rows, x)
        })
        .collect();
    let radius = init
        .iter()
        .map(|&(r, c)| {
            let k = classes.binary_search(&c).unwrap();
            sq_dist(x.row(r), &protos[k]).sqrt().to_f64_lossy()
        })
        .fold(0.0, f64::max);
    let limit = margin * radius;
    pool_rows
        .iter()
        .map(|&r| {
            let nearest = protos
                .iter()
                .map(|p| sq_dist(x.row(r), p).sqrt().to_f64_lossy())
                .fold(f64::INFINITY, f64::min);
            (r, OodScore { score: nearest, is_ood: nearest > limit })
        })
        .collect()
}

/// Confusion of an OOD verdict against gold membership in the known classes.
/// OOD is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OodConfusion {
    pub true_ood: usize,
    pub false_ood: usize,
    pub missed_ood: usize,
    pub true_ind: usize,
    pub accuracy: f64,
    pub ood_f1: f64,
    pub ind_f1: f64,
    /// Mean F1 over {IND, OOD} classes present in the gold labels.
    pub macro_f1: f64,
}

impl OodConfusion {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let mut gold = Vec::new();
        let mut pred = Vec::new();
        for (g, p, n) in [(1, 1, tp), (0, 1, fp), (1, 0, fn_), (0, 0, tn)] {
            gold.extend(std::iter::repeat_n(g, n));
            pred.extend(std::iter::repeat_n(p, n));
        }
        let (accuracy, macro_f1) = if gold.is_empty() {
            (0.0, 0.0)
        } else {
            accuracy_macro_f1(&pred, &gold).expect("equal lengths")
        };
        Self {
            true_ood: tp,
            false_ood: fp,
            missed_ood: fn_,
            true_ind: tn,
            accuracy,
            ood_f1: f1_score(tp, fp, fn_),
            ind_f1: f1_score(tn, fn_, fp),
            macro_f1,
        }
    }
}

pub fn ood_confusion(verdict: &OodVerdict, corpus: &Corpus) -> Result<OodConfusion, OodError> {
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&r, s) in &verdict.entries {
        let gold = corpus
            .gold(r)
            .ok_or_else(|| OodError::MissingGold(corpus.record(r).id.clone()))?;
        let truly_ood = !corpus.vocabulary().is_known(gold);
        match (truly_ood, s.is_ood) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(OodConfusion::from_counts(tp, fp, fn_, tn))
}

/// Pairs of (row, class) for the init split of a corpus.
pub fn init_pairs(corpus: &Corpus) -> Vec<(usize, ClassId)> {
    corpus
        .rows(Split::Init)
        .into_iter()
        .filter_map(|r| corpus.gold(r).map(|c| (r, c)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::UtteranceRecord;

    fn blobs() -> (EmbeddingMatrix<f64>, Vec<(usize, ClassId)>, Vec<usize>) {
        // class 0 near (-3,0), class 1 near (3,0); pool: one of each plus a far point
        let rows = vec![
            vec![-3.0, 0.2],
            vec![-3.1, -0.2],
            vec![-2.9, 0.0],
            vec![3.0, 0.1],
            vec![3.1, -0.1],
            vec![2.9, 0.0],
            vec![-3.0, 0.2],
            vec![3.0, 0.0],
            vec![0.0, 9.0],
        ];
        let init = vec![
            (0, ClassId(0)),
            (1, ClassId(0)),
            (2, ClassId(0)),
            (3, ClassId(1)),
            (4, ClassId(1)),
            (5, ClassId(1)),
        ];
        (EmbeddingMatrix::from_rows(&rows).unwrap(), init, vec![6, 7, 8])
    }

    #[test]
    fn proto_flags_far_point() {
        let x = EmbeddingMatrix::<f64>::from_rows(&[
            vec![-1.0, 0.0],
            vec![1.0, 0.0],
            vec![9.0, 0.0],
            vec![11.0, 0.0],
            vec![5.0, 5.0],
        ])
        .unwrap();
        let init = vec![(0, ClassId(0)), (1, ClassId(0)), (2, ClassId(1)), (3, ClassId(1))];
        let cfg = OodConfig {
            method: OodMethod::Proto,
            ..OodConfig::default()
        };
        let v = oodd(&init, &[4], &x, &cfg, &TrainConfig::default()).unwrap();
        let s = v.entries[&4];
        assert!((s.score - 50f64.sqrt()).abs() < 1e-12);
        assert!(s.is_ood);
    }

    #[test]
    fn msp_keeps_training_duplicates_in_domain() {
        let (x, init, pool) = blobs();
        let v = oodd(&init, &pool, &x, &OodConfig::default(), &TrainConfig::default()).unwrap();
        assert!(!v.entries[&6].is_ood);
        assert!(!v.entries[&7].is_ood);
        assert!(v.entries[&6].score > 0.5);
    }

    #[test]
    fn msp_boundary_is_strict() {
        // a point on the decision boundary of a symmetric model scores exactly 0.5
        let x = EmbeddingMatrix::<f64>::from_rows(&[vec![-1.0], vec![1.0], vec![0.0]]).unwrap();
        let init = vec![(0, ClassId(0)), (1, ClassId(1))];
        let v = oodd(&init, &[2], &x, &OodConfig::default(), &TrainConfig::default()).unwrap();
        assert_eq!(v.entries[&2].score, 0.5);
        assert!(!v.entries[&2].is_ood);
    }

    #[test]
    fn doc_flags_point_far_from_both_classes() {
        let (x, init, pool) = blobs();
        let cfg = OodConfig {
            method: OodMethod::Doc,
            ..OodConfig::default()
        };
        let train = TrainConfig {
            learning_rate: 0.5,
            epochs: 500,
            ..TrainConfig::default()
        };
        let v = oodd(&init, &pool, &x, &cfg, &train).unwrap();
        assert!(!v.entries[&6].is_ood);
        assert!(!v.entries[&7].is_ood);
        assert!(v.entries[&8].is_ood);
    }

    #[test]
    fn degenerate_and_unknown_method() {
        let (x, init, pool) = blobs();
        let one: Vec<_> = init.iter().copied().filter(|(_, c)| c.0 == 0).collect();
        assert_eq!(
            oodd(&one, &pool, &x, &OodConfig::default(), &TrainConfig::default()),
            Err(OodError::DegenerateLabels)
        );
        assert_eq!("lof".parse::<OodMethod>(), Err(OodError::UnknownMethod("lof".into())));
        assert_eq!("doc".parse::<OodMethod>(), Ok(OodMethod::Doc));
    }

    #[test]
    fn confusion_from_counts() {
        let c = OodConfusion::from_counts(8, 2, 1, 9);
        assert!((c.accuracy - 0.85).abs() < 1e-12);
        assert!((c.ood_f1 - 16.0 / 19.0).abs() < 1e-12);
        assert!((c.ind_f1 - 18.0 / 21.0).abs() < 1e-12);
        assert!((c.macro_f1 - (16.0 / 19.0 + 18.0 / 21.0) / 2.0).abs() < 1e-12);
    }

    fn pool_corpus(n_ood: usize, n_ind: usize) -> Corpus {
        let mut recs = vec![UtteranceRecord {
            id: "init".into(),
            text: String::new(),
            gold_label: "known".into(),
            split: Split::Init,
        }];
        for i in 0..n_ood + n_ind {
            recs.push(UtteranceRecord {
                id: format!("p{i}"),
                text: String::new(),
                gold_label: if i < n_ood { "novel".into() } else { "known".into() },
                split: Split::Pool,
            });
        }
        Corpus::from_records(recs)
    }

    #[test]
    fn confusion_against_corpus() {
        let corpus = pool_corpus(3, 7);
        let all_ood = OodVerdict {
            method: OodMethod::Msp,
            entries: (1..=10).map(|r| (r, OodScore { score: 0.0, is_ood: true })).collect(),
        };
        let c = ood_confusion(&all_ood, &corpus).unwrap();
        assert!((c.accuracy - 0.3).abs() < 1e-12);
        let perfect = OodVerdict {
            method: OodMethod::Msp,
            entries: (1..=10).map(|r| (r, OodScore { score: 0.0, is_ood: r <= 3 })).collect(),
        };
        let c = ood_confusion(&perfect, &corpus).unwrap();
        assert_eq!((c.accuracy, c.macro_f1), (1.0, 1.0));
    }
}
