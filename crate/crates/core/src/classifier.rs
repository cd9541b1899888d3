//! Multinomial logistic (softmax) regression over fixed embeddings, trained
//! by full-batch gradient descent. Produces the per-point confidence scores
//! (max softmax probability) the annotation strategy ranks on.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{ClassId, LabeledPool};
use crate::ingest::EmbeddingMatrix;
use crate::scalar::{dot, Scalar};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClassifierError {
    #[error("training labels cover fewer than two classes")]
    DegenerateLabels,
    #[error("loss became non-finite at epoch {0}")]
    NonFiniteLoss(usize),
    #[error("row {0} has no embedding")]
    UnknownPoint(usize),
    #[error("invalid training config: {0}")]
    InvalidConfig(&'static str),
}

fn default_lr() -> f64 {
    0.05
}
fn default_epochs() -> usize {
    200
}
fn default_l2() -> f64 {
    1e-4
}
fn default_patience() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_l2")]
    pub l2_penalty: f64,
    /// Epochs without training-loss improvement before stopping.
    #[serde(default = "default_patience")]
    pub early_stop_patience: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: default_lr(),
            epochs: default_epochs(),
            l2_penalty: default_l2(),
            early_stop_patience: default_patience(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ClassifierError::InvalidConfig("learning_rate must be positive"));
        }
        if self.epochs == 0 {
            return Err(ClassifierError::InvalidConfig("epochs must be at least 1"));
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return Err(ClassifierError::InvalidConfig("l2_penalty must be non-negative"));
        }
        Ok(())
    }
}

/// Weights are row-major `classes.len() × dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxModel<T> {
    pub classes: Vec<ClassId>,
    pub dim: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

/// A classifier that can be refit on the labeled pool and scores points.
pub trait ConfidenceModel<T: Scalar> {
    fn classes(&self) -> &[ClassId];
    fn probabilities(&self, features: &[T]) -> Vec<T>;
}

impl<T: Scalar> SoftmaxModel<T> {
    pub fn zeros(classes: Vec<ClassId>, dim: usize) -> Self {
        let c = classes.len();
        Self {
            classes,
            dim,
            weights: vec![T::zero(); c * dim],
            bias: vec![T::zero(); c],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn logits(&self, features: &[T]) -> Vec<T> {
        (0..self.n_classes())
            .map(|k| dot(&self.weights[k * self.dim..(k + 1) * self.dim], features) + self.bias[k])
            .collect()
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }
}

impl<T: Scalar> ConfidenceModel<T> for SoftmaxModel<T> {
    fn classes(&self) -> &[ClassId] {
        &self.classes
    }

    fn probabilities(&self, features: &[T]) -> Vec<T> {
        softmax(&self.logits(features))
    }
}

pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let exps: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let z = exps.iter().fold(T::zero(), |a, &b| a + b);
    exps.into_iter().map(|e| e / z).collect()
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &p) in v.iter().enumerate().skip(1) {
        if p > v[best] {
            best = i;
        }
    }
    best
}

/// Mean cross-entropy plus `l2/2 · ‖W‖²` (bias not penalized) and its
/// analytic gradient. `batch` holds (row, model class index) pairs.
pub fn loss_gradient<T: Scalar>(
    model: &SoftmaxModel<T>,
    x: &EmbeddingMatrix<T>,
    batch: &[(usize, usize)],
    l2: T,
) -> (T, Gradient<T>) {
    let (c, d) = (model.n_classes(), model.dim);
    let mut gw = vec![T::zero(); c * d];
    let mut gb = vec![T::zero(); c];
    let mut ce = T::zero();
    let n = T::from_usize_lossy(batch.len());
    for &(row, target) in batch {
        let f = x.row(row);
        let p = softmax(&model.logits(f));
        ce = ce - p[target].max(T::min_positive_value()).ln();
        for k in 0..c {
            let err = if k == target { p[k] - T::one() } else { p[k] };
            gb[k] = gb[k] + err;
            for (g, &v) in gw[k * d..(k + 1) * d].iter_mut().zip(f) {
                *g = *g + err * v;
            }
        }
    }
    let half = T::from_f64_lossy(0.5);
    let mut reg = T::zero();
    for (g, &w) in gw.iter_mut().zip(&model.weights) {
        *g = *g / n + l2 * w;
        reg = reg + w * w;
    }
    gb.iter_mut().for_each(|g| *g = *g / n);
    (
        ce / n + half * l2 * reg,
        Gradient {
            weights: gw,
            bias: gb,
        },
    )
}

pub fn loss<T: Scalar>(
    model: &SoftmaxModel<T>,
    x: &EmbeddingMatrix<T>,
    batch: &[(usize, usize)],
    l2: T,
) -> T {
    loss_gradient(model, x, batch, l2).0
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<T> {
    pub model: SoftmaxModel<T>,
    /// Loss at every accepted epoch, starting with the initial loss.
    pub loss_history: Vec<T>,
}

/// Fits a model on (row, class) examples. Examples are sorted by row first,
/// so their order never changes the result.
///
/// A step that raises the loss is rejected and the step size halved, which
/// keeps the accepted-loss sequence non-increasing.
pub fn fit<T: Scalar>(
    examples: &[(usize, ClassId)],
    x: &EmbeddingMatrix<T>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>, ClassifierError> {
    cfg.validate()?;
    let mut examples = examples.to_vec();
    examples.sort_unstable();
    if let Some(&(row, _)) = examples.iter().find(|(r, _)| *r >= x.n()) {
        return Err(ClassifierError::UnknownPoint(row));
    }
    let mut classes: Vec<ClassId> = examples.iter().map(|&(_, c)| c).collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(ClassifierError::DegenerateLabels);
    }
    let index: BTreeMap<ClassId, usize> = classes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let batch: Vec<(usize, usize)> = examples.iter().map(|&(r, c)| (r, index[&c])).collect();

    let l2 = T::from_f64_lossy(cfg.l2_penalty);
    let mut lr = T::from_f64_lossy(cfg.learning_rate);
    let mut model = SoftmaxModel::zeros(classes, x.dim());
    let (mut current, mut grad) = loss_gradient(&model, x, &batch, l2);
    let mut history = vec![current];
    let min_gain = T::from_f64_lossy(1e-10);
    let mut stalled = 0;

    for epoch in 0..cfg.epochs {
        let mut next = model.clone();
        for (w, g) in next.weights.iter_mut().zip(&grad.weights) {
            *w = *w - lr * *g;
        }
        for (b, g) in next.bias.iter_mut().zip(&grad.bias) {
            *b = *b - lr * *g;
        }
        let (next_loss, next_grad) = loss_gradient(&next, x, &batch, l2);
        if !next_loss.is_finite() || !next.is_finite() {
            if lr < T::from_f64_lossy(1e-12) {
                return Err(ClassifierError::NonFiniteLoss(epoch));
            }
            lr = lr * T::from_f64_lossy(0.5);
            stalled += 1;
        } else if next_loss <= current {
            if current - next_loss <= min_gain {
                stalled += 1;
            } else {
                stalled = 0;
            }
            model = next;
            current = next_loss;
            grad = next_grad;
            history.push(current);
        } else {
            lr = lr * T::from_f64_lossy(0.5);
            stalled += 1;
        }
        if stalled >= cfg.early_stop_patience.max(1) {
            break;
        }
    }
    Ok(TrainOutcome {
        model,
        loss_history: history,
    })
}

/// Trains on every entry of the labeled pool (silver included).
pub fn train<T: Scalar>(
    pool: &LabeledPool,
    x: &EmbeddingMatrix<T>,
    cfg: &TrainConfig,
) -> Result<SoftmaxModel<T>, ClassifierError> {
    fit(&pool.training_pairs(), x, cfg).map(|o| o.model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confidence<T> {
    pub predicted: ClassId,
    /// Maximum class probability.
    pub confidence: T,
    pub probabilities: Vec<T>,
}

/// Per-row predictions; `classes` gives the column order of the probability
/// vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceTable<T> {
    pub classes: Vec<ClassId>,
    pub entries: BTreeMap<usize, Confidence<T>>,
}

impl<T: Scalar> ConfidenceTable<T> {
    pub fn get(&self, row: usize) -> Option<&Confidence<T>> {
        self.entries.get(&row)
    }

    pub fn confidence(&self, row: usize) -> Option<T> {
        self.entries.get(&row).map(|c| c.confidence)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn predict<T: Scalar, M: ConfidenceModel<T>>(
    model: &M,
    rows: &[usize],
    x: &EmbeddingMatrix<T>,
) -> Result<ConfidenceTable<T>, ClassifierError> {
    let mut entries = BTreeMap::new();
    for &row in rows {
        if row >= x.n() {
            return Err(ClassifierError::UnknownPoint(row));
        }
        let probabilities = model.probabilities(x.row(row));
        let best = argmax(&probabilities);
        entries.insert(
            row,
            Confidence {
                predicted: model.classes()[best],
                confidence: probabilities[best],
                probabilities,
            },
        );
    }
    Ok(ConfidenceTable {
        classes: model.classes().to_vec(),
        entries,
    })
}
