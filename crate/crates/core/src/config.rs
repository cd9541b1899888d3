//! Run configuration: a single JSON document with every knob of a run.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::TrainConfig;
use crate::clustering::Clusterer;
use crate::discovery::StrategyVariant;
use crate::ood::OodConfig;
use crate::oracle::Backend;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    #[default]
    None,
    /// F = kappa gold labels per new class.
    GoldFew,
    /// A uniform random sample of the remaining budget.
    RandomFew,
}

#[derive(Debug, Error, PartialEq)]
#[error("invalid run config: {0}")]
pub struct ConfigError(pub String);

fn d_kappa() -> usize {
    10
}
fn d_x() -> usize {
    2
}
fn d_p() -> usize {
    3
}
fn d_q() -> usize {
    2
}
fn d_th() -> f64 {
    0.5
}
fn d_tau() -> f64 {
    0.8
}
fn d_true() -> bool {
    true
}
fn d_backend() -> Backend {
    Backend::SimulatedGold
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// Labels per class; the budget is `kappa × N`.
    #[serde(default = "d_kappa")]
    pub kappa: usize,
    /// Explicit total budget, overriding `kappa × N` (needed when N is unknown).
    #[serde(default)]
    pub budget: Option<usize>,
    /// Points annotated per cluster in each discovery round.
    #[serde(default = "d_x")]
    pub x: usize,
    /// Probe size per cluster when judging cluster quality.
    #[serde(default = "d_p")]
    pub p: usize,
    /// Extra annotations per bad cluster.
    #[serde(default = "d_q")]
    pub q: usize,
    /// Confidence threshold of the silver gate.
    #[serde(default = "d_th", rename = "TH", alias = "th")]
    pub th: f64,
    /// Cosine-similarity threshold of the silver gate.
    #[serde(default = "d_tau")]
    pub tau: f64,
    #[serde(default)]
    pub variant: StrategyVariant,
    #[serde(default)]
    pub ood: OodConfig,
    #[serde(default)]
    pub clusterer: Clusterer,
    #[serde(default)]
    pub classifier: TrainConfig,
    #[serde(default = "d_true")]
    pub normalize_embeddings: bool,
    #[serde(default)]
    pub baseline: Baseline,
    #[serde(default = "d_backend")]
    pub backend: Backend,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: &str| Err(ConfigError(m.to_owned()));
        if self.x < 2 {
            return fail("x must be at least 2");
        }
        if self.p < 1 {
            return fail("p must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.th) {
            return fail("TH must be in [0, 1]");
        }
        if !(-1.0..=1.0).contains(&self.tau) {
            return fail("tau must be in [-1, 1]");
        }
        if self.kappa == 0 && self.budget.is_none() {
            return fail("kappa must be positive");
        }
        let t = self.ood.msp_threshold;
        if !(t > 0.0 && t < 1.0) {
            return fail("msp_threshold must be in (0, 1)");
        }
        if self.ood.proto_margin.is_nan() || self.ood.proto_margin <= 0.0 {
            return fail("proto_margin must be positive");
        }
        self.classifier
            .validate()
            .map_err(|e| ConfigError(e.to_string()))
    }

    /// Total budget B for a corpus with `n_classes` classes.
    pub fn total_budget(&self, n_classes: usize) -> usize {
        self.budget.unwrap_or(self.kappa * n_classes)
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ood::OodMethod;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!((c.kappa, c.x, c.p, c.q), (10, 2, 3, 2));
        assert_eq!((c.th, c.tau), (0.5, 0.8));
        assert_eq!(c.variant, StrategyVariant::FULL);
        assert_eq!(c.ood.method, OodMethod::Msp);
        assert_eq!(c.ood.msp_threshold, 0.5);
        assert!(c.normalize_embeddings);
        assert_eq!(c.baseline, Baseline::None);
        assert_eq!(c.total_budget(7), 70);
        c.validate().unwrap();
    }

    #[test]
    fn json_round_trip_and_validation() {
        let c = RunConfig::from_json(r#"{"seed":4,"variant":3,"TH":0.7,"baseline":"random_few"}"#).unwrap();
        assert_eq!((c.seed, c.variant.number(), c.th), (4, 3, 0.7));
        assert_eq!(RunConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap(), c);
        assert!(RunConfig::from_json(r#"{"x":1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"variant":0}"#).is_err());
        assert!(RunConfig::from_json(r#"{"tau":1.5}"#).is_err());
        assert!(RunConfig::from_json(r#"{"bogus":1}"#).is_err());
        assert_eq!(RunConfig::from_json(r#"{"budget":33}"#).unwrap().total_budget(7), 33);
    }
}
