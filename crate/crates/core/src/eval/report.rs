use std::collections::BTreeMap;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Discovery, McNemar, SilverSummary};
use crate::config::RunConfig;
use crate::discovery::{NcdExit, NcdRound, Stage};
use crate::ood::{OodConfusion, OodMethod};
use crate::oracle::BudgetEvent;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_records: usize,
    pub n_init: usize,
    pub n_pool: usize,
    pub n_test: usize,
    pub n_classes: usize,
    pub n_known: usize,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetSummary {
    pub total: usize,
    /// Labels of the initial split, charged up front.
    pub initial: usize,
    pub spent: usize,
    pub remaining: usize,
    pub by_phase: BTreeMap<String, usize>,
    pub trace: Vec<BudgetEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OodSummary {
    pub method: OodMethod,
    pub scored: usize,
    pub flagged: usize,
    /// Against gold labels: positive means "class unknown at start".
    pub confusion: Option<OodConfusion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcdSummary {
    pub n_new: usize,
    pub k_sequence: Vec<usize>,
    pub rounds: Vec<NcdRound>,
    pub stored_clusters: usize,
    pub annotations: usize,
    pub exit: NcdExit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualitySummary {
    pub good: usize,
    pub bad: usize,
    pub good_fraction: f64,
    pub bad_fraction: f64,
    pub unprobed: usize,
    pub probe_annotations: usize,
    pub extra_annotations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpasSummary {
    pub silver: usize,
    pub gold: usize,
    pub gold_clusters: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestPrediction {
    pub id: String,
    pub predicted: String,
    pub gold: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub n_test: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub predictions: Vec<TestPrediction>,
}

impl Evaluation {
    pub fn correct(&self) -> Vec<bool> {
        self.predictions.iter().map(|p| p.predicted == p.gold).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Done,
    /// Not run because the budget was used up.
    SkippedBudget,
    /// Not run because there was nothing to work on.
    SkippedEmpty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub status: StageStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShortfallRecord {
    pub class: String,
    pub requested: usize,
    pub annotated: usize,
}

/// Everything a run produced. `timings_ms` is the only field that varies
/// between two runs of the same config and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub schema_version: u32,
    /// "MNID-n", "gold_few" or "random_few".
    pub method: String,
    pub config: RunConfig,
    pub dataset: DatasetStats,
    pub budget: BudgetSummary,
    pub ood: Option<OodSummary>,
    pub ncd: Option<NcdSummary>,
    pub clusters: Option<QualitySummary>,
    pub ppas: Option<PpasSummary>,
    pub discovery: Discovery,
    pub evaluation: Option<Evaluation>,
    pub silver: Option<SilverSummary>,
    /// Labeled-pool size by provenance.
    pub labels: BTreeMap<String, usize>,
    /// Charged labels bought during the run (initial labels excluded), by class.
    pub annotations_per_class: BTreeMap<String, usize>,
    pub stages: Vec<StageRecord>,
    pub shortfalls: Vec<ShortfallRecord>,
    pub timings_ms: BTreeMap<String, f64>,
}

impl PipelineReport {
    /// A copy with timings cleared, for comparing runs.
    pub fn without_timings(&self) -> Self {
        Self {
            timings_ms: BTreeMap::new(),
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One `metric,value` row per scalar metric.
    pub fn to_csv(&self) -> String {
        let mut rows: Vec<(String, String)> = vec![
            ("method".into(), self.method.clone()),
            ("seed".into(), self.config.seed.to_string()),
            ("budget_total".into(), self.budget.total.to_string()),
            ("budget_spent".into(), self.budget.spent.to_string()),
            ("discovered".into(), self.discovery.found.to_string()),
            ("total_unknown".into(), self.discovery.total_unknown.to_string()),
            ("discovery_rate".into(), self.discovery.rate.to_string()),
        ];
        if let Some(e) = &self.evaluation {
            rows.push(("accuracy".into(), e.accuracy.to_string()));
            rows.push(("macro_f1".into(), e.macro_f1.to_string()));
        }
        if let Some(n) = &self.ncd {
            rows.push(("n_new".into(), n.n_new.to_string()));
            rows.push(("stored_clusters".into(), n.stored_clusters.to_string()));
        }
        if let Some(c) = &self.clusters {
            rows.push(("good_fraction".into(), c.good_fraction.to_string()));
        }
        if let Some(s) = &self.silver {
            rows.push(("silver_count".into(), s.count.to_string()));
            rows.push(("silver_precision".into(), s.precision.to_string()));
        }
        let mut out = String::from("metric,value\n");
        for (k, v) in rows {
            out.push_str(&format!("{k},{v}\n"));
        }
        out
    }

    /// Writes the JSON report to `path` and the metric CSV next to it (same
    /// name, `.csv` extension). Each file is written to a temporary sibling
    /// and renamed into place, so a reader never sees a partial report.
    /// Returns the CSV path.
    pub fn write(&self, path: impl AsRef<Path>) -> io::Result<PathBuf> {
        let path = path.as_ref();
        let csv = companion_csv(path);
        write_atomically(&csv, self.to_csv().as_bytes())?;
        write_atomically(path, self.to_json().as_bytes())?;
        Ok(csv)
    }
}

fn companion_csv(path: &Path) -> PathBuf {
    if path.extension().is_some_and(|e| e == "csv") {
        let mut name = path.as_os_str().to_owned();
        name.push(".metrics.csv");
        PathBuf::from(name)
    } else {
        path.with_extension("csv")
    }
}

/// Write-then-rename within the target directory.
pub fn write_atomically(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

const REQUIRED_KEYS: [&str; 17] = [
    "schema_version",
    "method",
    "config",
    "dataset",
    "budget",
    "ood",
    "ncd",
    "clusters",
    "ppas",
    "discovery",
    "evaluation",
    "silver",
    "labels",
    "annotations_per_class",
    "stages",
    "shortfalls",
    "timings_ms",
];

/// Structural check of a serialized report.
pub fn check_report_schema(v: &Value) -> Result<(), String> {
    let obj = v.as_object().ok_or("report is not an object")?;
    for key in REQUIRED_KEYS {
        if !obj.contains_key(key) {
            return Err(format!("missing key {key:?}"));
        }
    }
    match obj["schema_version"].as_u64() {
        Some(n) if n == REPORT_SCHEMA_VERSION as u64 => {}
        other => return Err(format!("unsupported schema_version {other:?}")),
    }
    let budget = &obj["budget"];
    let spent = budget["spent"].as_u64().ok_or("budget.spent missing")?;
    let total = budget["total"].as_u64().ok_or("budget.total missing")?;
    if spent > total {
        return Err(format!("spent {spent} exceeds total {total}"));
    }
    Ok(())
}

/// McNemar over two evaluations of the same test set, by position.
pub fn compare(a: &Evaluation, b: &Evaluation) -> Result<McNemar, super::EvalError> {
    let gold: Vec<&str> = a.predictions.iter().map(|p| p.gold.as_str()).collect();
    let pa: Vec<&str> = a.predictions.iter().map(|p| p.predicted.as_str()).collect();
    let pb: Vec<&str> = b.predictions.iter().map(|p| p.predicted.as_str()).collect();
    super::mcnemar(&pa, &pb, &gold)
}
