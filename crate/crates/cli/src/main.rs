//! `mnid`: generate data, run pipelines and baselines, sweep variants, serve
//! the annotation API.
//!
//! Exit codes: 0 success, 1 run or output failure, 2 invalid input (spec,
//! config, corpus or embeddings), 3 budget smaller than the initial labels.

mod sweep;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mnid::discovery::DiscoveryError;
use mnid::domain::Split;
use mnid::ingest::{
    generate_synthetic, load_corpus, load_embeddings, write_corpus, write_embeddings, Corpus,
    SyntheticSpec,
};
use mnid::oracle::Backend;
use mnid::{run_simulated, Baseline, Embeddings, RunConfig};
use thiserror::Error;

#[derive(Parser)]
#[command(name = "mnid", version, about = "Budgeted novel intent discovery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a Gaussian-blob corpus and its embeddings.
    GenSynth {
        /// JSON synthetic spec.
        #[arg(long)]
        spec: PathBuf,
        /// Directory for corpus.jsonl and embeddings.bin.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the pipeline (or a baseline) against gold labels and write a report.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        /// JSON report path; the metric CSV goes next to it.
        #[arg(long)]
        report: PathBuf,
        /// Overrides the config's baseline.
        #[arg(long, value_enum)]
        baseline: Option<BaselineArg>,
    },
    /// Run many variants and seeds; one CSV row per run.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        /// Variant numbers and ranges, plus `gold-few` / `random-few`,
        /// e.g. `1..9` or `9,random-few`.
        #[arg(long, default_value = "1..9")]
        variants: String,
        /// Number of seeds, counting up from the config seed.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        /// Values of p to sweep, e.g. `1..4`; defaults to the config's.
        #[arg(long)]
        p: Option<String>,
        /// Values of q to sweep; defaults to the config's.
        #[arg(long)]
        q: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the annotation API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    GoldFew,
    RandomFew,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Invalid(_) => 2,
            CliError::Infeasible(_) => 3,
        }
    }
}

impl From<DiscoveryError> for CliError {
    fn from(e: DiscoveryError) -> Self {
        if e.is_budget_infeasible() {
            return CliError::Infeasible(e.to_string());
        }
        match e {
            DiscoveryError::Config(_) | DiscoveryError::Ingest(_) => CliError::Invalid(e.to_string()),
            _ => CliError::Failed(e.to_string()),
        }
    }
}

fn invalid(what: &Path) -> impl Fn(&dyn std::fmt::Display) -> CliError + '_ {
    move |e| CliError::Invalid(format!("{}: {e}", what.display()))
}

fn read_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| invalid(path)(&e))?;
    RunConfig::from_json(&text).map_err(|e| invalid(path)(&e))
}

/// Embeddings are loaded as stored; the pipeline normalizes them if the
/// config asks for it.
fn read_inputs(corpus: &Path, embeddings: &Path) -> Result<(Corpus, Embeddings), CliError> {
    let c = load_corpus(corpus).map_err(|e| invalid(corpus)(&e))?;
    let x = load_embeddings(embeddings, &c, false).map_err(|e| invalid(embeddings)(&e))?;
    Ok((c, x))
}

fn gen_synth(spec: &Path, out: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(spec).map_err(|e| invalid(spec)(&e))?;
    let s: SyntheticSpec = serde_json::from_str(&text).map_err(|e| invalid(spec)(&e))?;
    let (corpus, x) = generate_synthetic(&s).map_err(|e| invalid(spec)(&e))?;
    let failed = |e: &dyn std::fmt::Display| CliError::Failed(format!("{}: {e}", out.display()));
    std::fs::create_dir_all(out).map_err(|e| failed(&e))?;
    write_corpus(out.join("corpus.jsonl"), &corpus).map_err(|e| failed(&e))?;
    write_embeddings(out.join("embeddings.bin"), &x).map_err(|e| failed(&e))?;
    println!(
        "{} records ({} init, {} pool, {} test), {} classes ({} known), dim {} -> {}",
        corpus.len(),
        corpus.rows(Split::Init).len(),
        corpus.rows(Split::Pool).len(),
        corpus.rows(Split::Test).len(),
        s.n_classes,
        s.n_known,
        s.dim,
        out.display()
    );
    Ok(())
}

fn run(
    config: &Path,
    corpus: &Path,
    embeddings: &Path,
    report: &Path,
    baseline: Option<BaselineArg>,
) -> Result<(), CliError> {
    let mut cfg = read_config(config)?;
    if let Some(b) = baseline {
        cfg.baseline = match b {
            BaselineArg::GoldFew => Baseline::GoldFew,
            BaselineArg::RandomFew => Baseline::RandomFew,
        };
    }
    if cfg.backend == Backend::LiveQueue {
        return Err(CliError::Invalid(
            "backend live-queue needs an annotator; start it with `mnid serve`".into(),
        ));
    }
    let (c, x) = read_inputs(corpus, embeddings)?;
    let r = run_simulated(&c, &x, &cfg)?;
    let csv = r
        .write(report)
        .map_err(|e| CliError::Failed(format!("{}: {e}", report.display())))?;
    match &r.evaluation {
        Some(e) => println!("{}: accuracy {:.4}, macro-F1 {:.4}", r.method, e.accuracy, e.macro_f1),
        None => println!("{}: no evaluation (test split empty or unlabeled)", r.method),
    }
    println!(
        "discovered {}/{} unknown classes, budget {}/{}",
        r.discovery.found, r.discovery.total_unknown, r.budget.spent, r.budget.total
    );
    println!("report {} and {}", report.display(), csv.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn sweep_cmd(
    config: &Path,
    corpus: &Path,
    embeddings: &Path,
    variants: &str,
    seeds: u64,
    p: Option<&str>,
    q: Option<&str>,
    out: &Path,
) -> Result<(), CliError> {
    let cfg = read_config(config)?;
    let plan = sweep::Plan::parse(&cfg, variants, seeds, p, q).map_err(CliError::Invalid)?;
    let (c, x) = read_inputs(corpus, embeddings)?;
    let rows = sweep::execute(&plan, &cfg, &c, &x);
    sweep::write_csv(&rows, out).map_err(|e| CliError::Failed(format!("{}: {e}", out.display())))?;
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    println!("{} runs, {failed} failed -> {}", rows.len(), out.display());
    Ok(())
}

fn serve(addr: SocketAddr) -> Result<(), CliError> {
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Failed(e.to_string()))?;
    println!("listening on http://{addr}");
    rt.block_on(mnid_service::serve(addr))
        .map_err(|e| CliError::Failed(format!("{addr}: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenSynth { spec, out } => gen_synth(&spec, &out),
        Command::Run {
            config,
            corpus,
            embeddings,
            report,
            baseline,
        } => run(&config, &corpus, &embeddings, &report, baseline),
        Command::Sweep {
            config,
            corpus,
            embeddings,
            variants,
            seeds,
            p,
            q,
            out,
        } => sweep_cmd(&config, &corpus, &embeddings, &variants, seeds, p.as_deref(), q.as_deref(), &out),
        Command::Serve { addr } => serve(addr),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
