use std::path::Path;

use mnid::ingest::Corpus;
use mnid::{run_simulated, Baseline, Embeddings, RunConfig, StrategyVariant};
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Variant(StrategyVariant),
    Baseline(Baseline),
}

/// Every combination of method, p, q and seed, in that nesting order.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub ps: Vec<usize>,
    pub qs: Vec<usize>,
}

/// `a..b` (inclusive), `a`, or a comma-separated mix of both.
fn numbers(spec: &str) -> Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let parse = |s: &str| s.trim_start_matches('=').parse::<usize>();
            let (a, b) = (
                parse(a).map_err(|_| format!("bad range {part:?}"))?,
                parse(b).map_err(|_| format!("bad range {part:?}"))?,
            );
            if a > b {
                return Err(format!("empty range {part:?}"));
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| format!("bad number {part:?}"))?);
        }
    }
    if out.is_empty() {
        return Err(format!("nothing to sweep in {spec:?}"));
    }
    Ok(out)
}

fn methods(spec: &str) -> Result<Vec<Method>, String> {
    let mut out = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match part.replace('_', "-").as_str() {
            "gold-few" => out.push(Method::Baseline(Baseline::GoldFew)),
            "random-few" => out.push(Method::Baseline(Baseline::RandomFew)),
            _ => {
                for n in numbers(part)? {
                    let v = u8::try_from(n)
                        .ok()
                        .and_then(|n| StrategyVariant::new(n).ok())
                        .ok_or_else(|| format!("no variant {n}"))?;
                    out.push(Method::Variant(v));
                }
            }
        }
    }
    if out.is_empty() {
        return Err(format!("no methods in {spec:?}"));
    }
    Ok(out)
}

impl Plan {
    pub fn parse(
        cfg: &RunConfig,
        variants: &str,
        seeds: u64,
        p: Option<&str>,
        q: Option<&str>,
    ) -> Result<Self, String> {
        if seeds == 0 {
            return Err("--seeds must be at least 1".into());
        }
        Ok(Plan {
            methods: methods(variants)?,
            seeds: (0..seeds).map(|i| cfg.seed.wrapping_add(i)).collect(),
            ps: p.map_or(Ok(vec![cfg.p]), numbers)?,
            qs: q.map_or(Ok(vec![cfg.q]), numbers)?,
        })
    }

    fn configs(&self, base: &RunConfig) -> Vec<RunConfig> {
        let mut out = Vec::new();
        for &m in &self.methods {
            for &p in &self.ps {
                for &q in &self.qs {
                    for &seed in &self.seeds {
                        let mut cfg = base.clone();
                        match m {
                            Method::Variant(v) => {
                                cfg.variant = v;
                                cfg.baseline = Baseline::None;
                            }
                            Method::Baseline(b) => cfg.baseline = b,
                        }
                        cfg.p = p;
                        cfg.q = q;
                        cfg.seed = seed;
                        out.push(cfg);
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub method: String,
    pub seed: u64,
    pub p: usize,
    pub q: usize,
    /// `ok`, `infeasible` or `error`.
    pub status: String,
    pub error: String,
    pub accuracy: Option<f64>,
    pub macro_f1: Option<f64>,
    pub discovered: Option<usize>,
    pub total_unknown: Option<usize>,
    pub discovery_rate: Option<f64>,
    pub budget_total: Option<usize>,
    pub budget_spent: Option<usize>,
    pub n_new: Option<usize>,
    pub stored_clusters: Option<usize>,
    pub silver_count: Option<usize>,
    pub silver_precision: Option<f64>,
}

fn method_name(cfg: &RunConfig) -> String {
    match cfg.baseline {
        Baseline::None => format!("MNID-{}", cfg.variant.number()),
        Baseline::GoldFew => "gold_few".into(),
        Baseline::RandomFew => "random_few".into(),
    }
}

fn run_one(cfg: &RunConfig, corpus: &Corpus, x: &Embeddings) -> Row {
    let mut row = Row {
        method: method_name(cfg),
        seed: cfg.seed,
        p: cfg.p,
        q: cfg.q,
        status: "ok".into(),
        error: String::new(),
        accuracy: None,
        macro_f1: None,
        discovered: None,
        total_unknown: None,
        discovery_rate: None,
        budget_total: None,
        budget_spent: None,
        n_new: None,
        stored_clusters: None,
        silver_count: None,
        silver_precision: None,
    };
    match run_simulated(corpus, x, cfg) {
        Ok(r) => {
            row.accuracy = r.evaluation.as_ref().map(|e| e.accuracy);
            row.macro_f1 = r.evaluation.as_ref().map(|e| e.macro_f1);
            row.discovered = Some(r.discovery.found);
            row.total_unknown = Some(r.discovery.total_unknown);
            row.discovery_rate = Some(r.discovery.rate);
            row.budget_total = Some(r.budget.total);
            row.budget_spent = Some(r.budget.spent);
            row.n_new = r.ncd.as_ref().map(|n| n.n_new);
            row.stored_clusters = r.ncd.as_ref().map(|n| n.stored_clusters);
            row.silver_count = r.silver.as_ref().map(|s| s.count);
            row.silver_precision = r.silver.as_ref().map(|s| s.precision);
        }
        Err(e) => {
            row.status = if e.is_budget_infeasible() { "infeasible" } else { "error" }.into();
            row.error = e.to_string();
        }
    }
    row
}

/// Runs the plan in parallel; rows come back in plan order.
pub fn execute(plan: &Plan, base: &RunConfig, corpus: &Corpus, x: &Embeddings) -> Vec<Row> {
    plan.configs(base)
        .par_iter()
        .map(|cfg| run_one(cfg, corpus, x))
        .collect()
}

pub fn write_csv(rows: &[Row], path: &Path) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    mnid::eval::write_atomically(path, &bytes)
}
