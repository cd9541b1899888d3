use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use serde_json::{json, Value};

fn mnid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mnid")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn write(dir: &Path, name: &str, v: &Value) -> String {
    let p = dir.join(name);
    std::fs::write(&p, v.to_string()).unwrap();
    p.display().to_string()
}

struct Data {
    dir: tempfile::TempDir,
    corpus: String,
    embeddings: String,
}

impl Data {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self, name: &str, extra: Value) -> String {
        let mut cfg = json!({
            "seed": 2,
            "kappa": 4,
            "ood": {"method": "proto"},
            "classifier": {"learning_rate": 1.0, "epochs": 200}
        });
        for (k, v) in extra.as_object().unwrap() {
            cfg[k] = v.clone();
        }
        write(self.dir.path(), name, &cfg)
    }
}

fn gen_data() -> Data {
    let dir = tempfile::tempdir().unwrap();
    let spec = json!({
        "n_classes": 5, "n_known": 2, "points_per_class": 20, "dim": 8,
        "center_scale": 1.0, "cluster_std": 0.05, "seed": 4, "kappa": 4
    });
    let spec = write(dir.path(), "spec.json", &spec);
    let out = dir.path().join("data");
    let o = mnid(&["gen-synth", "--spec", &spec, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    Data {
        corpus: out.join("corpus.jsonl").display().to_string(),
        embeddings: out.join("embeddings.bin").display().to_string(),
        dir,
    }
}

fn run(d: &Data, config: &str, report: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "run",
        "--config",
        config,
        "--corpus",
        &d.corpus,
        "--embeddings",
        &d.embeddings,
        "--report",
        report.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    mnid(&args)
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn gen_synth_writes_both_files_and_a_summary() {
    let d = gen_data();
    assert!(Path::new(&d.corpus).exists());
    assert!(Path::new(&d.embeddings).exists());
    let corpus = mnid::ingest::load_corpus(&d.corpus).unwrap();
    assert_eq!(corpus.len(), 100);
    let x = mnid::ingest::load_embeddings::<f64>(&d.embeddings, &corpus, false).unwrap();
    assert_eq!(x.dim(), 8);
}

#[test]
fn gen_synth_rejects_bad_specs_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let out = out.to_str().unwrap();
    let cases = [
        json!({"n_classes": 3, "n_known": 3, "points_per_class": 10, "dim": 2, "center_scale": 1.0, "cluster_std": 0.1, "seed": 0}),
        json!({"n_classes": 3, "n_known": 1, "points_per_class": 10, "dim": 2, "center_scale": 1.0, "cluster_std": 0.1, "seed": 0, "colour": 1}),
        json!({"n_classes": 3}),
    ];
    for (i, spec) in cases.iter().enumerate() {
        let p = write(dir.path(), &format!("s{i}.json"), spec);
        let o = mnid(&["gen-synth", "--spec", &p, "--out", out]);
        assert_eq!(code(&o), 2, "case {i}");
        assert!(!o.stderr.is_empty());
    }
    let o = mnid(&["gen-synth", "--spec", "/nonexistent.json", "--out", out]);
    assert_eq!(code(&o), 2);
}

#[test]
fn run_is_deterministic_and_writes_json_and_csv() {
    let d = gen_data();
    let cfg = d.config("c.json", json!({}));
    let (a, b) = (d.path("a.json"), d.path("b.json"));
    for p in [&a, &b] {
        let o = run(&d, &cfg, p, &[]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stdout).contains("MNID-9"));
    }
    let strip = |p: &Path| {
        let mut v = read_json(p);
        v["timings_ms"] = json!({});
        serde_json::to_string_pretty(&v).unwrap()
    };
    assert_eq!(strip(&a), strip(&b));
    assert_eq!(
        std::fs::read(a.with_extension("csv")).unwrap(),
        std::fs::read(b.with_extension("csv")).unwrap()
    );
    mnid::eval::check_report_schema(&read_json(&a)).unwrap();
    // nothing but the two outputs per run is left behind
    let names: Vec<String> = std::fs::read_dir(d.dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with('a') || n.starts_with('b') || n.starts_with(".tmp"))
        .collect();
    assert_eq!(names.len(), 4, "{names:?}");
}

#[test]
fn infeasible_budget_exits_3_without_a_report() {
    let d = gen_data();
    let cfg = d.config("c.json", json!({"budget": 3}));
    let report = d.path("r.json");
    let o = run(&d, &cfg, &report, &[]);
    assert_eq!(code(&o), 3);
    assert!(!report.exists());
    assert!(!report.with_extension("csv").exists());
}

#[test]
fn tight_budget_records_the_early_exit() {
    let d = gen_data();
    // 8 initial labels of 10: the K = 1 round fits, K = 2 does not
    let cfg = d.config("c.json", json!({"budget": 10}));
    let report = d.path("r.json");
    let o = run(&d, &cfg, &report, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&report);
    assert_eq!(r["ncd"]["exit"], "budget");
    assert_eq!(r["ncd"]["rounds"][0]["annotations"], 2);
    assert_eq!(r["ncd"]["rounds"][1]["annotations"], 0);
    assert_eq!(r["budget"]["spent"], 10);
}

#[test]
fn baseline_flag_overrides_the_config() {
    let d = gen_data();
    let cfg = d.config("c.json", json!({}));
    let report = d.path("r.json");
    let o = run(&d, &cfg, &report, &["--baseline", "random-few"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&report);
    assert_eq!(r["method"], "random_few");
    assert_eq!(r["budget"]["spent"], r["budget"]["total"]);
    assert!(r["evaluation"]["accuracy"].is_number());
    let o = run(&d, &cfg, &report, &["--baseline", "gold-few"]);
    assert_eq!(code(&o), 0);
    assert_eq!(read_json(&report)["method"], "gold_few");
}

#[test]
fn run_rejects_bad_inputs_with_code_2() {
    let d = gen_data();
    let report = d.path("r.json");
    let bad = d.config("bad.json", json!({"x": 1}));
    assert_eq!(code(&run(&d, &bad, &report, &[])), 2);
    let unknown = d.config("unknown.json", json!({"kapa": 3}));
    assert_eq!(code(&run(&d, &unknown, &report, &[])), 2);
    let live = d.config("live.json", json!({"backend": "live-queue"}));
    assert_eq!(code(&run(&d, &live, &report, &[])), 2);
    let cfg = d.config("c.json", json!({}));
    let o = mnid(&["run", "--config", &cfg, "--corpus", "/nonexistent", "--embeddings", &d.embeddings, "--report", report.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(!report.exists());
}

fn sweep(d: &Data, cfg: &str, out: &Path, extra: &[&str]) -> Vec<csv::StringRecord> {
    let mut args = vec!["sweep", "--config", cfg, "--corpus", &d.corpus, "--embeddings", &d.embeddings, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = mnid(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(out).unwrap();
    assert_eq!(&r.headers().unwrap()[0], "method");
    r.records().map(|r| r.unwrap()).collect()
}

#[test]
fn sweep_shapes() {
    let d = gen_data();
    let cfg = d.config("c.json", json!({}));
    let out = d.path("s.csv");

    let rows = sweep(&d, &cfg, &out, &["--variants", "1..9", "--seeds", "1"]);
    let methods: Vec<&str> = rows.iter().map(|r| &r[0]).collect();
    assert_eq!(methods, (1..=9).map(|v| format!("MNID-{v}")).collect::<Vec<_>>());
    assert!(rows.iter().all(|r| &r[4] == "ok"));

    let rows = sweep(&d, &cfg, &out, &["--variants", "9,random-few", "--seeds", "10"]);
    assert_eq!(rows.len(), 20);
    assert_eq!(rows.iter().filter(|r| &r[0] == "random_few").count(), 10);
    let seeds: Vec<&str> = rows[..10].iter().map(|r| &r[1]).collect();
    assert_eq!(seeds, (2..12).map(|s| s.to_string()).collect::<Vec<_>>());

    let rows = sweep(&d, &cfg, &out, &["--variants", "9", "--p", "1..4", "--q", "0..3"]);
    assert_eq!(rows.len(), 16);
    let cells: std::collections::BTreeSet<(String, String)> =
        rows.iter().map(|r| (r[2].to_owned(), r[3].to_owned())).collect();
    assert_eq!(cells.len(), 16);
}

#[test]
fn sweep_records_failed_runs_as_rows() {
    let d = gen_data();
    let cfg = d.config("c.json", json!({"budget": 3}));
    let out = d.path("s.csv");
    let rows = sweep(&d, &cfg, &out, &["--variants", "1,2", "--seeds", "2"]);
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| &r[4] == "infeasible" && !r[5].is_empty()));

    let o = mnid(&["sweep", "--config", &cfg, "--corpus", &d.corpus, "--embeddings", &d.embeddings, "--variants", "12", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn serve_answers_http() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let addr = format!("127.0.0.1:{port}");
    let mut child = Command::new(env!("CARGO_BIN_EXE_mnid"))
        .args(["serve", "--addr", &addr])
        .stdout(std::process::Stdio::null())
        .spawn()
        .unwrap();
    let start = Instant::now();
    let response = loop {
        if let Ok(mut s) = TcpStream::connect(&addr) {
            s.write_all(b"GET /api/state HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").unwrap();
            let mut buf = String::new();
            s.read_to_string(&mut buf).unwrap();
            break buf;
        }
        assert!(start.elapsed() < Duration::from_secs(10));
        std::thread::sleep(Duration::from_millis(20));
    };
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(response.starts_with("HTTP/1.1 404"), "{response}");
    assert!(response.contains("no session"));
}
