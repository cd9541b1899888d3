use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{mpsc, Arc, Mutex, MutexGuard};
use std::thread;
use std::time::{SystemTime, UNIX_EPOCH};

use mnid::discovery::{run, ClusterSummary, NcdRound, Observer, Stage};
use mnid::ingest::{Corpus, EmbeddingMatrix};
use mnid::domain::{Split, UNKNOWN_LABEL};
use mnid::oracle::{Backend, LabelQuery, LabelSource, OracleError, Phase, SimulatedGold};
use mnid::{PipelineReport, RunConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A label query waiting for the annotator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRequest {
    pub request_id: String,
    pub point_id: String,
    pub text: String,
    pub phase: Phase,
    pub cluster_id: Option<usize>,
    /// Unix time in milliseconds.
    pub issued_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetView {
    pub total: usize,
    pub spent: usize,
}

/// What an annotator sees of the running pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub backend: Backend,
    /// Stage the pipeline is in; `None` before it starts.
    pub phase: Option<Stage>,
    pub budget: BudgetView,
    pub n_new: usize,
    pub clusters: Vec<ClusterSummary>,
    pub open_requests: usize,
    pub done: bool,
    pub error: Option<String>,
    pub report: Option<PipelineReport>,
}

/// Reply to a label submission. Replaying a submission returns the same ack.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub request_id: String,
    pub label: String,
    /// The label named a class not seen before in this session.
    pub new_class: bool,
    /// Charged labels, initial ones included, once this answer counts.
    pub spent: usize,
    pub remaining: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SubmitError {
    #[error("unknown request {0}")]
    UnknownRequest(String),
    #[error("request {0} was already answered with a different label")]
    DuplicateSubmission(String),
    #[error("budget exhausted")]
    BudgetExhausted,
    #[error("invalid label {0:?}")]
    InvalidLabel(String),
}

struct Batch {
    ids: Vec<String>,
    answers: HashMap<String, String>,
    reply: mpsc::Sender<Vec<String>>,
}

pub(crate) struct Inner {
    id: String,
    backend: Backend,
    stage: Option<Stage>,
    total: usize,
    initial: usize,
    /// Spend as last reported by the pipeline.
    reported_spent: usize,
    answered: usize,
    n_new: usize,
    clusters: Vec<ClusterSummary>,
    queue: Vec<AnnotationRequest>,
    batch: Option<Batch>,
    acks: HashMap<String, Ack>,
    classes: Vec<String>,
    next_request: u64,
    done: bool,
    error: Option<String>,
    report: Option<PipelineReport>,
}

impl Inner {
    fn spent(&self) -> usize {
        match self.backend {
            // answers count the moment they arrive, ahead of the ledger
            Backend::LiveQueue => self.initial + self.answered,
            Backend::SimulatedGold => self.reported_spent,
        }
    }

    fn snapshot(&self) -> SessionState {
        SessionState {
            session_id: self.id.clone(),
            backend: self.backend,
            phase: self.stage,
            budget: BudgetView {
                total: self.total,
                spent: self.spent(),
            },
            n_new: self.n_new,
            clusters: self.clusters.clone(),
            open_requests: self.queue.len(),
            done: self.done,
            error: self.error.clone(),
            report: self.report.clone(),
        }
    }

    fn submit(&mut self, request_id: &str, label: &str) -> Result<Ack, SubmitError> {
        let label = label.trim();
        if let Some(ack) = self.acks.get(request_id) {
            return if ack.label == label {
                Ok(ack.clone())
            } else {
                Err(SubmitError::DuplicateSubmission(request_id.to_owned()))
            };
        }
        let pos = self
            .queue
            .iter()
            .position(|r| r.request_id == request_id)
            .ok_or_else(|| SubmitError::UnknownRequest(request_id.to_owned()))?;
        if self.spent() >= self.total {
            return Err(SubmitError::BudgetExhausted);
        }
        if label.is_empty() || label == UNKNOWN_LABEL {
            return Err(SubmitError::InvalidLabel(label.to_owned()));
        }
        self.queue.remove(pos);
        self.answered += 1;
        let new_class = !self.classes.iter().any(|c| c == label);
        if new_class {
            self.classes.push(label.to_owned());
        }
        let ack = Ack {
            request_id: request_id.to_owned(),
            label: label.to_owned(),
            new_class,
            spent: self.spent(),
            remaining: self.total - self.spent(),
        };
        self.acks.insert(request_id.to_owned(), ack.clone());

        let batch = self.batch.as_mut().expect("open requests belong to a batch");
        batch.answers.insert(request_id.to_owned(), label.to_owned());
        if batch.answers.len() == batch.ids.len() {
            let mut batch = self.batch.take().unwrap();
            let answers = batch
                .ids
                .iter()
                .map(|id| batch.answers.remove(id).unwrap())
                .collect();
            // the worker may have gone away; then there is nobody to tell
            let _ = batch.reply.send(answers);
        }
        Ok(ack)
    }
}

/// Handle to one pipeline session.
#[derive(Clone)]
pub struct Session {
    inner: Arc<Mutex<Inner>>,
}

impl Session {
    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Starts the pipeline on a worker thread. With a live-queue backend its
    /// label queries wait in the queue until answered through [`Session::submit`].
    pub fn start(
        id: String,
        cfg: RunConfig,
        corpus: Corpus,
        x: EmbeddingMatrix<f64>,
        report_path: Option<PathBuf>,
    ) -> Self {
        let classes = corpus
            .records()
            .iter()
            .filter(|r| r.split == Split::Init)
            .map(|r| r.gold_label.clone())
            .fold(Vec::new(), |mut v: Vec<String>, c| {
                if !v.contains(&c) {
                    v.push(c);
                }
                v
            });
        let inner = Arc::new(Mutex::new(Inner {
            id,
            backend: cfg.backend,
            stage: None,
            total: 0,
            initial: 0,
            reported_spent: 0,
            answered: 0,
            n_new: 0,
            clusters: Vec::new(),
            queue: Vec::new(),
            batch: None,
            acks: HashMap::new(),
            classes,
            next_request: 0,
            done: false,
            error: None,
            report: None,
        }));
        let session = Session { inner };
        let worker = session.clone();
        thread::spawn(move || worker.work(cfg, corpus, x, report_path));
        session
    }

    fn work(self, cfg: RunConfig, corpus: Corpus, x: EmbeddingMatrix<f64>, report_path: Option<PathBuf>) {
        let mut observer = Snapshots(self.clone());
        let result = match cfg.backend {
            Backend::SimulatedGold => run(&corpus, &x, &cfg, &mut SimulatedGold::new(&corpus), &mut observer),
            Backend::LiveQueue => run(&corpus, &x, &cfg, &mut LiveQueue(self.clone()), &mut observer),
        };
        let written = match (&result, &report_path) {
            (Ok(report), Some(path)) => report.write(path).err().map(|e| format!("writing report: {e}")),
            _ => None,
        };
        let mut inner = self.lock();
        inner.done = true;
        inner.queue.clear();
        inner.batch = None;
        match result {
            Ok(report) => {
                inner.reported_spent = report.budget.spent;
                inner.report = Some(report);
                inner.error = written;
            }
            Err(e) => inner.error = Some(e.to_string()),
        }
    }

    pub fn id(&self) -> String {
        self.lock().id.clone()
    }

    pub fn is_done(&self) -> bool {
        self.lock().done
    }

    pub fn state(&self) -> SessionState {
        self.lock().snapshot()
    }

    /// Open requests in issue order, at most `limit`.
    pub fn queue(&self, limit: Option<usize>) -> Vec<AnnotationRequest> {
        let inner = self.lock();
        inner.queue.iter().take(limit.unwrap_or(usize::MAX)).cloned().collect()
    }

    pub fn classes(&self) -> Vec<String> {
        self.lock().classes.clone()
    }

    pub fn report(&self) -> Option<PipelineReport> {
        self.lock().report.clone()
    }

    pub fn error(&self) -> Option<String> {
        self.lock().error.clone()
    }

    pub fn submit(&self, request_id: &str, label: &str) -> Result<Ack, SubmitError> {
        self.lock().submit(request_id, label)
    }
}

/// Label source that parks each batch in the session queue and blocks until
/// every request in it is answered.
struct LiveQueue(Session);

impl LabelSource for LiveQueue {
    fn backend(&self) -> Backend {
        Backend::LiveQueue
    }

    fn answer(&mut self, queries: &[LabelQuery]) -> Result<Vec<String>, OracleError> {
        let (tx, rx) = mpsc::channel();
        {
            let mut inner = self.0.lock();
            let now = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_millis() as u64);
            let mut ids = Vec::with_capacity(queries.len());
            for q in queries {
                let request_id = format!("r{}", inner.next_request);
                inner.next_request += 1;
                inner.queue.push(AnnotationRequest {
                    request_id: request_id.clone(),
                    point_id: q.point_id.clone(),
                    text: q.text.clone(),
                    phase: q.phase,
                    cluster_id: q.cluster_id,
                    issued_at: now,
                });
                ids.push(request_id);
            }
            inner.batch = Some(Batch {
                ids,
                answers: HashMap::new(),
                reply: tx,
            });
        }
        rx.recv().map_err(|_| OracleError::Disconnected)
    }
}

struct Snapshots(Session);

impl Observer for Snapshots {
    fn stage(&mut self, stage: Stage) {
        self.0.lock().stage = Some(stage);
    }

    fn budget(&mut self, spent: usize, total: usize) {
        let mut inner = self.0.lock();
        if inner.total == 0 && inner.reported_spent == 0 {
            // the first report comes before anything is bought
            inner.initial = spent;
        }
        inner.total = total;
        inner.reported_spent = spent;
    }

    fn ncd_round(&mut self, round: &NcdRound) {
        self.0.lock().n_new = round.n_new;
    }

    fn clusters(&mut self, clusters: &[ClusterSummary]) {
        self.0.lock().clusters = clusters.to_vec();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inner(total: usize, initial: usize) -> (Inner, mpsc::Receiver<Vec<String>>) {
        let (tx, rx) = mpsc::channel();
        let request = |n: usize| AnnotationRequest {
            request_id: format!("r{n}"),
            point_id: format!("p{n}"),
            text: String::new(),
            phase: Phase::Ncd,
            cluster_id: Some(0),
            issued_at: 0,
        };
        let inner = Inner {
            id: "s1".into(),
            backend: Backend::LiveQueue,
            stage: Some(Stage::Ncd),
            total,
            initial,
            reported_spent: initial,
            answered: 0,
            n_new: 0,
            clusters: Vec::new(),
            queue: vec![request(0), request(1)],
            batch: Some(Batch {
                ids: vec!["r0".into(), "r1".into()],
                answers: HashMap::new(),
                reply: tx,
            }),
            acks: HashMap::new(),
            classes: vec!["a".into()],
            next_request: 2,
            done: false,
            error: None,
            report: None,
        };
        (inner, rx)
    }

    #[test]
    fn answers_go_back_in_issue_order_once_the_batch_is_complete() {
        let (mut s, rx) = inner(10, 4);
        s.submit("r1", "b").unwrap();
        assert!(rx.try_recv().is_err());
        let ack = s.submit("r0", " a ").unwrap();
        assert_eq!((ack.spent, ack.remaining, ack.new_class), (6, 4, false));
        assert_eq!(rx.try_recv().unwrap(), ["a", "b"]);
        assert_eq!(s.classes, ["a", "b"]);
    }

    #[test]
    fn an_exhausted_budget_refuses_new_answers_but_replays_old_ones() {
        let (mut s, _rx) = inner(5, 4);
        let ack = s.submit("r0", "a").unwrap();
        assert_eq!(ack.remaining, 0);
        assert_eq!(s.submit("r1", "a"), Err(SubmitError::BudgetExhausted));
        assert_eq!(s.submit("r0", "a"), Ok(ack));
        assert_eq!(s.snapshot().budget.spent, 5);
        assert_eq!(s.submit("r1", "?"), Err(SubmitError::BudgetExhausted));
    }
}
