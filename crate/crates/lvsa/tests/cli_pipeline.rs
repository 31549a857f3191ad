//! End-to-end pipeline through the installed binary: ingest real TSV files,
//! generate a synthetic benchmark graph, sample queries, run all three
//! curriculum stages, evaluate, inspect groundings and traces, and time the
//! oracle against the encoder — plus the exit-code contract.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_lvsa")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("spawn lvsa binary")
}

fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {:?} failed with {:?}\nstdout: {}\nstderr: {}",
        args,
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 stdout")
}

fn p(path: &Path) -> String {
    path.display().to_string()
}

#[test]
fn full_pipeline_on_a_toy_graph() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    // --- gen-kg: a 50-entity benchmark graph with held-out edges.
    let kg = d.join("kg");
    let out = run_ok(&[
        "gen-kg",
        "--entities", "50",
        "--relations", "4",
        "--degree", "6",
        "--seed", "5",
        "--valid-frac", "0.08",
        "--test-frac", "0.08",
        "--out", &p(&kg),
    ]);
    assert!(out.contains("50 entities"), "{out}");

    // --- gen-queries: training paths (partial mode), negation training
    // queries, and a mixed full-mode evaluation set.
    let q2p = d.join("train_2p.jsonl");
    run_ok(&[
        "gen-queries", "--kg", &p(&kg), "--tag", "2p", "--n", "120",
        "--seed", "11", "--mode", "partial", "--out", &p(&q2p),
    ]);
    let q3p = d.join("train_3p.jsonl");
    run_ok(&[
        "gen-queries", "--kg", &p(&kg), "--tag", "3p", "--n", "120",
        "--seed", "13", "--mode", "partial", "--out", &p(&q3p),
    ]);
    // Stage 2 consumes one file; concatenate the path shapes.
    let paths = d.join("train_paths.jsonl");
    let mut cat = std::fs::read_to_string(&q2p).unwrap();
    cat.push_str(&std::fs::read_to_string(&q3p).unwrap());
    std::fs::write(&paths, cat).unwrap();
    let q2in = d.join("train_2in.jsonl");
    run_ok(&[
        "gen-queries", "--kg", &p(&kg), "--tag", "2in", "--n", "150",
        "--seed", "17", "--mode", "partial", "--out", &p(&q2in),
    ]);
    let evalq = d.join("eval.jsonl");
    run_ok(&[
        "gen-queries", "--kg", &p(&kg), "--tag", "2i", "--n", "40",
        "--seed", "19", "--mode", "full", "--out", &p(&evalq),
    ]);

    // --- train: three chained curriculum stages.
    let cfg = d.join("train.cfg");
    std::fs::write(
        &cfg,
        "d = 32\nseed = 7\nlr = 0.002\nbatch_size = 64\nepochs = 25\n",
    )
    .unwrap();
    let (s1, s2, s3) = (d.join("s1.ckpt"), d.join("s2.ckpt"), d.join("s3.ckpt"));
    run_ok(&[
        "train", "--stage", "1", "--kg", &p(&kg), "--config", &p(&cfg),
        "--out", &p(&s1),
    ]);
    run_ok(&[
        "train", "--stage", "2", "--kg", &p(&kg), "--config", &p(&cfg),
        "--queries", &p(&paths), "--init", &p(&s1), "--out", &p(&s2),
    ]);
    let out = run_ok(&[
        "train", "--stage", "3", "--kg", &p(&kg), "--config", &p(&cfg),
        "--queries", &p(&q2in), "--init", &p(&s2), "--out", &p(&s3),
    ]);
    assert!(out.contains("stage 3"), "{out}");

    // --- eval: report file with per-tag metrics.
    let report_path = d.join("report.json");
    let out = run_ok(&[
        "eval", "--ckpt", &p(&s3), "--kg", &p(&kg),
        "--queries", &p(&evalq), "--out", &p(&report_path),
    ]);
    assert!(out.contains("a_p"), "{out}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    let m2i = &report["per_tag"]["2i"];
    assert!(m2i["mrr"].as_f64().unwrap() > 0.0);
    assert!(m2i["n"].as_u64().unwrap() > 0);

    // --- ground: JSONL, one line per query, k candidates each.
    let out = run_ok(&["ground", "--ckpt", &p(&s3), "--queries", &p(&evalq), "--var", "0", "--k", "3"]);
    let first: serde_json::Value = serde_json::from_str(out.lines().next().unwrap()).unwrap();
    assert_eq!(first["top"].as_array().unwrap().len(), 3);

    // --- trace: full encoding trace of one sampled query line.
    let line = std::fs::read_to_string(&evalq).unwrap().lines().next().unwrap().to_string();
    let out = run_ok(&["trace", "--ckpt", &p(&s3), "--query", &line]);
    let trace: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(!trace["disjuncts"].as_array().unwrap().is_empty());

    // --- bench: oracle-vs-encoder table on the same graph.
    let out = run_ok(&["bench", "--ckpt", &p(&s3), "--kg", &p(&kg), "--n", "10"]);
    let bench: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(bench["tags"].as_array().unwrap().len(), 3);
    assert!(bench["oracle_ratio"].as_f64().unwrap() > 0.0);
}

#[test]
fn ingest_reads_tsv_and_roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let train = d.join("train.tsv");
    std::fs::write(
        &train,
        "alice\tworks at\tacme\nbob\tworks at\tacme\nacme\tbased in\tparis\n",
    )
    .unwrap();
    let test = d.join("test.tsv");
    std::fs::write(&test, "bob\tlives in\tparis\n").unwrap();
    let kg = d.join("kg");
    let out = run_ok(&[
        "ingest", "--train", &p(&train), "--test", &p(&test), "--out", &p(&kg),
    ]);
    assert!(out.contains("5 entities"), "{out}");
    assert!(out.contains("3 train"), "{out}");
    assert!(out.contains("1 test"), "{out}");

    // The directory round-trips through gen-queries.
    let q = d.join("q.jsonl");
    run_ok(&[
        "gen-queries", "--kg", &p(&kg), "--tag", "1p", "--n", "3",
        "--seed", "1", "--mode", "partial", "--out", &p(&q),
    ]);
    assert_eq!(std::fs::read_to_string(&q).unwrap().lines().count(), 3);
}

#[test]
fn exit_codes_follow_the_contract() {
    // 0: help and version.
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["eval", "--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));

    // 2: usage errors.
    assert_eq!(run(&["--definitely-not-a-flag"]).status.code(), Some(2));
    assert_eq!(run(&["no-such-subcommand"]).status.code(), Some(2));
    assert_eq!(
        run(&["gen-queries", "--kg", "x", "--tag", "7q", "--n", "1", "--out", "q"])
            .status
            .code(),
        Some(2)
    );

    // 1: operational errors (well-formed usage, bad world).
    let out = run(&["eval", "--ckpt", "/nonexistent.ckpt", "--kg", "/nowhere",
                    "--queries", "/no.jsonl", "--out", "/tmp/x.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    // Stage chaining is enforced as an operational error, not a crash.
    let dir = tempfile::tempdir().unwrap();
    let kg = dir.path().join("kg");
    run_ok(&[
        "gen-kg", "--entities", "10", "--relations", "2", "--degree", "3",
        "--seed", "1", "--out", &p(&kg),
    ]);
    let out = run(&["train", "--stage", "2", "--kg", &p(&kg), "--out",
                    &p(&dir.path().join("c.ckpt"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--init"));
}
