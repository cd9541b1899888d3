//! Budgeted novel intent discovery.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the double-precision types the pipeline uses by default.

pub mod classifier;
pub mod clustering;
pub mod config;
pub mod discovery;
pub mod domain;
pub mod eval;
pub mod ingest;
pub mod ood;
pub mod oracle;
pub mod rng;
pub mod scalar;

pub use config::{Baseline, RunConfig};
pub use discovery::{run, run_mnid, run_simulated, StrategyVariant};
pub use eval::PipelineReport;
pub use scalar::Scalar;

pub type Embeddings = ingest::EmbeddingMatrix<f64>;
pub type Clusters = clustering::ClusterSet<f64>;
pub type Model = classifier::SoftmaxModel<f64>;
pub type Confidences = classifier::ConfidenceTable<f64>;
