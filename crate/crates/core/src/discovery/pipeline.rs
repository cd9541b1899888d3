use std::borrow::Cow;
use std::collections::BTreeMap;
use std::time::Instant;

use super::{
    cqba, gold_few, ncd, ppas, random_few, DiscoveryError, Observer, Silent, Stage,
};
use crate::classifier::{predict, train};
use crate::config::{Baseline, RunConfig};
use crate::domain::{BudgetError, ClassId, Provenance, Split};
use crate::eval::{
    accuracy_macro_f1, discovery_rate, silver_precision, BudgetSummary, DatasetStats, Evaluation,
    NcdSummary, OodSummary, PipelineReport, PpasSummary, QualitySummary, ShortfallRecord,
    StageRecord, StageStatus, TestPrediction, REPORT_SCHEMA_VERSION,
};
use crate::ingest::{Corpus, EmbeddingMatrix, IngestError};
use crate::ood::{init_pairs, ood_confusion, oodd};
use crate::oracle::{LabelSource, LabelState, Oracle, SimulatedGold};
use crate::scalar::Scalar;

impl DiscoveryError {
    /// True when the budget cannot even cover the initial labels.
    pub fn is_budget_infeasible(&self) -> bool {
        matches!(
            self,
            DiscoveryError::Oracle(crate::oracle::OracleError::Budget(BudgetError::Infeasible { .. }))
        )
    }
}

/// Shared state of one run while it executes.
struct Run<'c, 'x, T: Scalar> {
    corpus: &'c Corpus,
    x: Cow<'x, EmbeddingMatrix<T>>,
    cfg: &'c RunConfig,
    state: LabelState,
    stages: Vec<StageRecord>,
    timings: BTreeMap<String, f64>,
    clock: Instant,
}

impl<'c, 'x, T: Scalar> Run<'c, 'x, T> {
    fn start(
        corpus: &'c Corpus,
        x: &'x EmbeddingMatrix<T>,
        cfg: &'c RunConfig,
    ) -> Result<Self, DiscoveryError> {
        cfg.validate()?;
        if x.n() != corpus.len() {
            return Err(IngestError::CountMismatch {
                expected: corpus.len(),
                found: x.n(),
            }
            .into());
        }
        let x = if cfg.normalize_embeddings && !x.is_normalized() {
            let mut owned = x.clone();
            owned.normalize_rows()?;
            Cow::Owned(owned)
        } else {
            Cow::Borrowed(x)
        };
        let init = corpus.rows(Split::Init);
        let init_classes: std::collections::BTreeSet<ClassId> =
            init.iter().filter_map(|&r| corpus.gold(r)).collect();
        if init_classes.len() < 2 {
            return Err(DiscoveryError::DegenerateInit);
        }
        let state = LabelState::with_initial(corpus, &init, cfg.total_budget(corpus.n_classes()))?;
        Ok(Self {
            corpus,
            x,
            cfg,
            state,
            stages: Vec::new(),
            timings: BTreeMap::new(),
            clock: Instant::now(),
        })
    }

    fn record(&mut self, stage: Stage, status: StageStatus, note: Option<String>) {
        let key = serde_json::to_value(stage).unwrap().as_str().unwrap().to_owned();
        let elapsed = self.clock.elapsed().as_secs_f64() * 1e3;
        *self.timings.entry(key).or_default() += elapsed;
        self.clock = Instant::now();
        self.stages.push(StageRecord { stage, status, note });
    }

    fn skip(&mut self, stage: Stage, status: StageStatus) {
        self.stages.push(StageRecord {
            stage,
            status,
            note: None,
        });
    }

    fn train_and_evaluate(&mut self, observer: &mut dyn Observer) -> Result<Option<Evaluation>, DiscoveryError> {
        observer.stage(Stage::Train);
        let model = train(&self.state.pool, &self.x, &self.cfg.classifier)?;
        self.record(Stage::Train, StageStatus::Done, None);

        observer.stage(Stage::Evaluate);
        let test = self.corpus.rows(Split::Test);
        if test.is_empty() || test.iter().any(|&r| !self.corpus.record(r).has_gold()) {
            self.skip(Stage::Evaluate, StageStatus::SkippedEmpty);
            return Ok(None);
        }
        let table = predict(&model, &test, &self.x)?;
        let predictions: Vec<TestPrediction> = test
            .iter()
            .map(|&r| TestPrediction {
                id: self.corpus.record(r).id.clone(),
                predicted: self.state.vocab.name(table.entries[&r].predicted).to_owned(),
                gold: self.corpus.record(r).gold_label.clone(),
            })
            .collect();
        let pred: Vec<&str> = predictions.iter().map(|p| p.predicted.as_str()).collect();
        let gold: Vec<&str> = predictions.iter().map(|p| p.gold.as_str()).collect();
        let (accuracy, macro_f1) = accuracy_macro_f1(&pred, &gold)?;
        self.record(Stage::Evaluate, StageStatus::Done, None);
        Ok(Some(Evaluation {
            n_test: test.len(),
            accuracy,
            macro_f1,
            predictions,
        }))
    }

    fn finish(self, method: String, evaluation: Option<Evaluation>) -> PipelineReport {
        let corpus = self.corpus;
        let state = &self.state;
        let mut by_phase = BTreeMap::new();
        for e in &state.trace {
            let key = serde_json::to_value(e.phase).unwrap().as_str().unwrap().to_owned();
            *by_phase.entry(key).or_default() += e.count;
        }
        let mut annotations_per_class = BTreeMap::new();
        for (_, e) in state.pool.iter() {
            if e.provenance.is_charged() && e.provenance != Provenance::Initial {
                *annotations_per_class
                    .entry(state.vocab.name(e.class).to_owned())
                    .or_default() += 1;
            }
        }
        let mut labels = BTreeMap::new();
        for (_, e) in state.pool.iter() {
            let key = serde_json::to_value(e.provenance).unwrap().as_str().unwrap().to_owned();
            *labels.entry(key).or_default() += 1;
        }
        let silver = silver_precision(&state.pool, corpus).ok().flatten();
        PipelineReport {
            schema_version: REPORT_SCHEMA_VERSION,
            method,
            config: self.cfg.clone(),
            dataset: DatasetStats {
                n_records: corpus.len(),
                n_init: corpus.rows(Split::Init).len(),
                n_pool: corpus.rows(Split::Pool).len(),
                n_test: corpus.rows(Split::Test).len(),
                n_classes: corpus.n_classes(),
                n_known: corpus.n_known(),
                dim: self.x.dim(),
            },
            budget: BudgetSummary {
                total: state.ledger.total,
                initial: state.pool.count(Provenance::Initial),
                spent: state.ledger.spent,
                remaining: state.ledger.remaining(),
                by_phase,
                trace: state.trace.clone(),
            },
            ood: None,
            ncd: None,
            clusters: None,
            ppas: None,
            discovery: discovery_rate(&state.pool, &state.vocab),
            evaluation,
            silver,
            labels,
            annotations_per_class,
            stages: self.stages,
            shortfalls: Vec::new(),
            timings_ms: self.timings,
        }
    }
}

/// The full pipeline: OOD filtering, discovery, cluster probing, confidence
/// scoring, silver and gold annotation, final training and evaluation.
/// Budget exhaustion ends the annotation stages early; later stages still run
/// and every stage is logged.
pub fn run_mnid<T: Scalar>(
    corpus: &Corpus,
    x: &EmbeddingMatrix<T>,
    cfg: &RunConfig,
    source: &mut dyn LabelSource,
    observer: &mut dyn Observer,
) -> Result<PipelineReport, DiscoveryError> {
    let mut run = Run::start(corpus, x, cfg)?;
    let mut oracle = Oracle::new(corpus, source);
    observer.budget(run.state.ledger.spent, run.state.ledger.total);

    observer.stage(Stage::Ood);
    let pool_rows = corpus.rows(Split::Pool);
    let verdict = oodd(&init_pairs(corpus), &pool_rows, &run.x, &cfg.ood, &cfg.classifier)?;
    let os = verdict.ood_rows();
    let ood = OodSummary {
        method: verdict.method,
        scored: verdict.entries.len(),
        flagged: os.len(),
        confusion: ood_confusion(&verdict, corpus).ok(),
    };
    run.record(Stage::Ood, StageStatus::Done, None);

    let mut ncd_summary = None;
    let mut quality_summary = None;
    let mut ppas_summary = None;

    let outcome = if os.is_empty() {
        run.skip(Stage::Ncd, StageStatus::SkippedEmpty);
        None
    } else {
        observer.stage(Stage::Ncd);
        let out = ncd(
            &os,
            &mut run.state,
            &mut oracle,
            &run.x,
            cfg.x,
            &cfg.clusterer,
            cfg.seed,
            observer,
        )?;
        ncd_summary = Some(NcdSummary {
            n_new: out.n_new,
            k_sequence: out.rounds.iter().map(|r| r.k).collect(),
            rounds: out.rounds.clone(),
            stored_clusters: out.stored_clusters(),
            annotations: out.annotations(),
            exit: out.exit,
        });
        let exit = serde_json::to_value(out.exit).expect("exit serializes");
        let note = Some(format!("exit: {}", exit.as_str().unwrap_or_default()));
        run.record(Stage::Ncd, StageStatus::Done, note);
        Some(out)
    };

    match outcome.and_then(|o| o.clusters) {
        None => {
            for s in [Stage::Cqba, Stage::Confidence, Stage::Ppas] {
                run.skip(s, StageStatus::SkippedEmpty);
            }
        }
        Some(_) if run.state.remaining() == 0 => {
            for s in [Stage::Cqba, Stage::Confidence, Stage::Ppas] {
                run.skip(s, StageStatus::SkippedBudget);
            }
        }
        Some(set) => {
            observer.stage(Stage::Cqba);
            let quality = cqba(
                &mut run.state,
                &mut oracle,
                &set,
                &run.x,
                cfg.p,
                cfg.q,
                cfg.seed,
                observer,
            )?;
            quality_summary = Some(QualitySummary {
                good: quality.good_count(),
                bad: quality.bad_count(),
                good_fraction: quality.good_fraction(),
                bad_fraction: if quality.clusters.is_empty() {
                    0.0
                } else {
                    1.0 - quality.good_fraction()
                },
                unprobed: quality.clusters.iter().filter(|c| !c.probed).count(),
                probe_annotations: quality.probe_annotations,
                extra_annotations: quality.extra_annotations,
            });
            run.record(Stage::Cqba, StageStatus::Done, None);

            observer.stage(Stage::Confidence);
            let model = train(&run.state.pool, &run.x, &cfg.classifier)?;
            let unlabeled: Vec<usize> = set
                .members
                .iter()
                .flatten()
                .copied()
                .filter(|&r| !run.state.pool.contains(r))
                .collect();
            let all_cs = predict(&model, &unlabeled, &run.x)?;
            run.record(Stage::Confidence, StageStatus::Done, None);

            if run.state.remaining() == 0 {
                run.skip(Stage::Ppas, StageStatus::SkippedBudget);
            } else {
                observer.stage(Stage::Ppas);
                let out = ppas(
                    &mut run.state,
                    &mut oracle,
                    &all_cs,
                    &quality,
                    &set,
                    &run.x,
                    cfg.th,
                    cfg.tau,
                    cfg.variant,
                    cfg.seed,
                    observer,
                )?;
                ppas_summary = Some(PpasSummary {
                    silver: out.silver.len(),
                    gold: out.gold.len(),
                    gold_clusters: out.gold_clusters,
                });
                run.record(Stage::Ppas, StageStatus::Done, None);
            }
        }
    }

    let evaluation = run.train_and_evaluate(observer)?;
    observer.stage(Stage::Done);
    let mut report = run.finish(cfg.variant.to_string(), evaluation);
    report.ood = Some(ood);
    report.ncd = ncd_summary;
    report.clusters = quality_summary;
    report.ppas = ppas_summary;
    Ok(report)
}

/// Gl_F (F = κ labels per initially unknown class) or Rn_F (a random sample
/// of the whole remaining budget), then final training and evaluation.
pub fn run_baseline<T: Scalar>(
    corpus: &Corpus,
    x: &EmbeddingMatrix<T>,
    cfg: &RunConfig,
    baseline: Baseline,
    source: &mut dyn LabelSource,
    observer: &mut dyn Observer,
) -> Result<PipelineReport, DiscoveryError> {
    let mut run = Run::start(corpus, x, cfg)?;
    let mut oracle = Oracle::new(corpus, source);
    let pool_rows = corpus.rows(Split::Pool);
    observer.stage(Stage::Baseline);
    let mut shortfalls = Vec::new();
    let method = match baseline {
        Baseline::GoldFew => {
            let new: Vec<ClassId> = run.state.vocab.unknown_classes().collect();
            for s in gold_few(&mut run.state, &mut oracle, &pool_rows, cfg.kappa, &new, cfg.seed)? {
                shortfalls.push(ShortfallRecord {
                    class: run.state.vocab.name(s.class).to_owned(),
                    requested: s.requested,
                    annotated: s.annotated,
                });
            }
            "gold_few"
        }
        Baseline::RandomFew | Baseline::None => {
            let n = run.state.remaining();
            random_few(&mut run.state, &mut oracle, &pool_rows, n, cfg.seed)?;
            "random_few"
        }
    };
    observer.budget(run.state.ledger.spent, run.state.ledger.total);
    run.record(Stage::Baseline, StageStatus::Done, None);
    let evaluation = run.train_and_evaluate(observer)?;
    observer.stage(Stage::Done);
    let mut report = run.finish(method.to_owned(), evaluation);
    report.shortfalls = shortfalls;
    Ok(report)
}

/// Runs whatever `cfg.baseline` selects.
pub fn run<T: Scalar>(
    corpus: &Corpus,
    x: &EmbeddingMatrix<T>,
    cfg: &RunConfig,
    source: &mut dyn LabelSource,
    observer: &mut dyn Observer,
) -> Result<PipelineReport, DiscoveryError> {
    match cfg.baseline {
        Baseline::None => run_mnid(corpus, x, cfg, source, observer),
        b => run_baseline(corpus, x, cfg, b, source, observer),
    }
}

/// [`run`] against the corpus gold labels.
pub fn run_simulated<T: Scalar>(
    corpus: &Corpus,
    x: &EmbeddingMatrix<T>,
    cfg: &RunConfig,
) -> Result<PipelineReport, DiscoveryError> {
    let mut source = SimulatedGold::new(corpus);
    run(corpus, x, cfg, &mut source, &mut Silent)
}
