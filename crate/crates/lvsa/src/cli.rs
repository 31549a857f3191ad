//! Command-line entry point.
//!
//! One thin binary exposes the whole pipeline: `ingest` and `gen-kg` produce
//! a graph directory, `gen-queries` samples labeled queries from it, `train`
//! runs one curriculum stage and writes a checkpoint, `eval` scores labeled
//! queries, `ground` and `trace` inspect what a trained model believes, and
//! `bench` times the grounding oracle against the encoder.
//!
//! Exit codes: 0 on success, 1 on operational errors (bad data, missing
//! files, failed invariants), 2 on usage errors (unknown flags or
//! subcommands). Identical command lines on identical inputs produce
//! identical outputs when run single-threaded (the default).

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::Config;
use crate::encoder;
use crate::error::{Error, Result};
use crate::eval;
use crate::kg::{self, Kg, SplitGraphs, Vocab};
use crate::oracle::{sample_queries, SampleMode};
use crate::query::{parse_query, read_queries_jsonl, write_queries_jsonl, Tag};
use crate::synth::{gen_splits, SynthSpec};
use crate::trainer::{
    load_checkpoint, save_checkpoint, train_stage, CkptMeta, TrainData, TrainState,
};

#[derive(Parser)]
#[command(
    name = "lvsa",
    version,
    about = "Logic-constrained vector-symbolic query answering over knowledge graphs"
)]
struct Cli {
    /// Worker threads for query evaluation (1 = fully deterministic).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Read triple TSV files and write a canonical graph directory.
    Ingest(IngestArgs),
    /// Generate a seeded synthetic graph directory.
    GenKg(GenKgArgs),
    /// Sample labeled queries of one shape into a JSONL file.
    GenQueries(GenQueriesArgs),
    /// Run one curriculum stage and write a checkpoint.
    Train(TrainArgs),
    /// Rank labeled queries and write a metrics report.
    Eval(EvalArgs),
    /// Rank candidate groundings of an existential variable.
    Ground(GroundArgs),
    /// Emit the full encoding trace of one query as JSON.
    Trace(TraceArgs),
    /// Time the grounding oracle against the encoder on 1p/2p/3p.
    Bench(BenchArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Training triples (head<TAB>relation<TAB>tail).
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    valid: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Output graph directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenKgArgs {
    #[arg(long)]
    entities: usize,
    #[arg(long)]
    relations: usize,
    /// Edge draws per entity (realized degree can be slightly lower).
    #[arg(long)]
    degree: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    valid_frac: f64,
    #[arg(long, default_value_t = 0.05)]
    test_frac: f64,
    /// Output graph directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Evaluation-style: walks the full graph, labels easy and hard answers.
    Full,
    /// Training-style: walks train+valid, labels easy answers only.
    Partial,
}

fn parse_tag(s: &str) -> std::result::Result<Tag, String> {
    Tag::from_str(s).map_err(|e| e.to_string())
}

#[derive(Args)]
struct GenQueriesArgs {
    /// Graph directory (from ingest or gen-kg).
    #[arg(long)]
    kg: PathBuf,
    /// Query shape: 1p 2p 3p 2i 3i ip pi 2u up 2in 3in inp pin pni.
    #[arg(long, value_parser = parse_tag)]
    tag: Tag,
    /// Number of queries to sample.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Mode::Full)]
    mode: Mode,
    /// Output JSONL file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Curriculum stage: 1 trains embedding tables on one-hop edges,
    /// 2 trains the projection MLPs on 2p/3p, 3 trains the negation MLP on 2in.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    stage: u8,
    /// Graph directory.
    #[arg(long)]
    kg: PathBuf,
    /// Training queries (JSONL); required for stages 2 and 3.
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Key-value config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Checkpoint to continue from; required for stages 2 and 3.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Output checkpoint file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    kg: PathBuf,
    /// Labeled queries (JSONL).
    #[arg(long)]
    queries: PathBuf,
    /// Output JSON report.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GroundArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Queries (JSONL) whose variable to ground.
    #[arg(long)]
    queries: PathBuf,
    /// Existential variable id.
    #[arg(long)]
    var: usize,
    /// Candidates to list per query.
    #[arg(long, default_value_t = 10)]
    k: usize,
}

#[derive(Args)]
struct TraceArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// One query as a JSONL line.
    #[arg(long)]
    query: String,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    kg: PathBuf,
    /// Queries per shape.
    #[arg(long, default_value_t = 200)]
    n: usize,
}

/// Parses argv and dispatches. Returns the process exit status.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    // A second in-process call cannot rebuild the pool; the first setting wins.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global();
    match dispatch(cli.cmd) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Prints one line to stdout. A broken pipe (downstream consumer closed,
/// e.g. `| head`) ends the process quietly with success, matching standard
/// line-oriented tools; other write failures are fatal.
fn emit(line: String) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    if let Err(e) = writeln!(out, "{line}") {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: cannot write to stdout: {e}");
        std::process::exit(1);
    }
}

fn dispatch(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Ingest(a) => cmd_ingest(a),
        Cmd::GenKg(a) => cmd_gen_kg(a),
        Cmd::GenQueries(a) => cmd_gen_queries(a),
        Cmd::Train(a) => cmd_train(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Ground(a) => cmd_ground(a),
        Cmd::Trace(a) => cmd_trace(a),
        Cmd::Bench(a) => cmd_bench(a),
    }
}

fn describe(splits: &SplitGraphs) -> String {
    format!(
        "{} entities, {} relations, {} train / {} valid / {} test triples",
        splits.full.n_entities(),
        splits.full.n_forward_relations(),
        splits.train.n_forward_triples(),
        splits.train_valid.n_forward_triples() - splits.train.n_forward_triples(),
        splits.full.n_forward_triples() - splits.train_valid.n_forward_triples(),
    )
}

fn cmd_ingest(a: IngestArgs) -> Result<()> {
    let splits = kg::ingest(&a.train, a.valid.as_deref(), a.test.as_deref())?;
    kg::write_dir(&a.out, &splits)?;
    emit(format!("wrote {}: {}", a.out.display(), describe(&splits)));
    Ok(())
}

fn cmd_gen_kg(a: GenKgArgs) -> Result<()> {
    let splits = gen_splits(&SynthSpec {
        n_entities: a.entities,
        n_relations: a.relations,
        degree: a.degree,
        valid_frac: a.valid_frac,
        test_frac: a.test_frac,
        seed: a.seed,
    })?;
    kg::write_dir(&a.out, &splits)?;
    emit(format!("wrote {}: {}", a.out.display(), describe(&splits)));
    Ok(())
}

fn cmd_gen_queries(a: GenQueriesArgs) -> Result<()> {
    let splits = kg::load_dir(&a.kg)?;
    let mode = match a.mode {
        Mode::Full => SampleMode::Full,
        Mode::Partial => SampleMode::Partial,
    };
    let queries = sample_queries(&splits, a.tag, a.n, a.seed, mode)?;
    write_queries_jsonl(&a.out, &queries, &splits.full)?;
    emit(format!(
        "wrote {} {} queries to {}",
        queries.len(),
        a.tag.as_str(),
        a.out.display()
    ));
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let cfg = match &a.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    cfg.validate()?;
    let splits = kg::load_dir(&a.kg)?;

    let mut state = match (&a.init, a.stage) {
        (Some(p), _) => {
            let (state, meta) = load_checkpoint(p)?;
            check_vocab(&meta, &splits.full)?;
            state
        }
        (None, 1) => TrainState::new(crate::tape::ModelParams::init(
            cfg.d,
            splits.full.n_entities(),
            splits.full.n_forward_relations(),
            cfg.tie_inverse_conjugate,
            cfg.leaky_slope,
            cfg.seed,
        )?),
        (None, s) => {
            return Err(Error::Config(format!(
                "stage {s} continues an earlier checkpoint; pass --init"
            )));
        }
    };

    let data = match a.stage {
        1 => TrainData::one_hop_from_triples(&splits.train)?,
        _ => {
            let path = a.queries.as_ref().ok_or_else(|| {
                Error::Config(format!("stage {} trains on sampled queries; pass --queries", a.stage))
            })?;
            TrainData::from_queries(read_queries_jsonl(path, &splits.full)?)
        }
    };

    let stage = a.stage;
    let total = cfg.epochs;
    let every = cfg.eval_every.max(1);
    let patience = cfg.patience;
    let mut best = f64::INFINITY;
    let mut strikes = 0usize;
    let mut last_loss = f64::NAN;
    train_stage(&mut state, &data, stage, &cfg, &mut |st, _| {
        eprintln!(
            "stage {stage} epoch {}/{} mean loss {:.6} ({} items)",
            st.epoch, total, st.mean_loss, st.n_items
        );
        last_loss = st.mean_loss;
        if st.epoch % every == 0 {
            if st.mean_loss < best {
                best = st.mean_loss;
                strikes = 0;
            } else if patience > 0 {
                strikes += 1;
                if strikes >= patience {
                    eprintln!("early stop: no improvement over {patience} checks");
                    return false;
                }
            }
        }
        true
    })?;

    save_checkpoint(
        &a.out,
        &state,
        cfg.seed,
        splits.full.entities().labels(),
        splits.full.relations().labels(),
    )?;
    emit(format!(
        "wrote {} (stage {}, {} parameters, final loss {:.6})",
        a.out.display(),
        state.stage,
        state.params.n_params(),
        last_loss
    ));
    Ok(())
}

fn check_vocab(meta: &CkptMeta, kg: &Kg) -> Result<()> {
    if meta.entity_labels != kg.entities().labels()
        || meta.relation_labels != kg.relations().labels()
    {
        return Err(Error::Integrity(
            "checkpoint vocabulary differs from the graph directory".into(),
        ));
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let (state, meta) = load_checkpoint(&a.ckpt)?;
    let splits = kg::load_dir(&a.kg)?;
    check_vocab(&meta, &splits.full)?;
    let queries = read_queries_jsonl(&a.queries, &splits.full)?;
    let report = eval::evaluate(&state.params, &queries)?;
    std::fs::write(&a.out, serde_json::to_string_pretty(&report)?)?;
    let fmt = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    emit(format!(
        "wrote {}: a_p {} a_n {} over {} queries ({} skipped)",
        a.out.display(),
        fmt(report.a_p),
        fmt(report.a_n),
        report.n_queries,
        report.n_skipped
    ));
    Ok(())
}

/// Vocabulary-only graph reconstructed from checkpoint metadata, for parsing
/// queries when no graph directory is at hand.
fn kg_from_meta(meta: &CkptMeta) -> Result<Kg> {
    let mut entities = Vocab::new();
    for l in &meta.entity_labels {
        entities.intern(l);
    }
    let mut relations = Vocab::new();
    for l in &meta.relation_labels {
        relations.intern(l);
    }
    Kg::from_triples(entities, relations, Vec::new())
}

fn cmd_ground(a: GroundArgs) -> Result<()> {
    let (state, meta) = load_checkpoint(&a.ckpt)?;
    let vocab_kg = kg_from_meta(&meta)?;
    let queries = read_queries_jsonl(&a.queries, &vocab_kg)?;
    for (i, q) in queries.iter().enumerate() {
        let top = encoder::ground_variable(&state.params, q, a.var, a.k)?;
        let rows: Vec<serde_json::Value> = top
            .into_iter()
            .map(|(e, s)| {
                serde_json::json!({
                    "entity": meta.entity_labels[e],
                    "score": s,
                })
            })
            .collect();
        let line = serde_json::json!({ "query": i, "var": a.var, "top": rows });
        emit(line.to_string());
    }
    Ok(())
}

fn cmd_trace(a: TraceArgs) -> Result<()> {
    let (state, meta) = load_checkpoint(&a.ckpt)?;
    let vocab_kg = kg_from_meta(&meta)?;
    let q = parse_query(&a.query, &vocab_kg, "<--query>", 1)?;
    let trace = encoder::encode_trace(
        &state.params,
        &q,
        &meta.entity_labels,
        &meta.relation_labels,
    )?;
    emit(serde_json::to_string_pretty(&trace)?);
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let (state, meta) = load_checkpoint(&a.ckpt)?;
    let splits = kg::load_dir(&a.kg)?;
    check_vocab(&meta, &splits.full)?;
    let report = eval::bench_dichotomy(&state.params, &splits.full, a.n, 5)?;
    emit(serde_json::to_string_pretty(&report)?);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_err(args: &[&str]) -> clap::Error {
        match Cli::try_parse_from(args) {
            Ok(_) => panic!("expected a parse error for {args:?}"),
            Err(e) => e,
        }
    }

    #[test]
    fn usage_errors_exit_2_and_help_exits_0() {
        let err = parse_err(&["lvsa", "--definitely-not-a-flag"]);
        assert!(!matches!(
            err.kind(),
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion
        ));
        let help = parse_err(&["lvsa", "eval", "--help"]);
        assert!(matches!(help.kind(), ErrorKind::DisplayHelp));
        let ver = parse_err(&["lvsa", "--version"]);
        assert!(matches!(ver.kind(), ErrorKind::DisplayVersion));
    }

    #[test]
    fn tag_and_stage_values_are_validated_at_parse_time() {
        assert!(Cli::try_parse_from([
            "lvsa", "gen-queries", "--kg", "x", "--tag", "9z", "--n", "1", "--out", "q"
        ])
        .is_err());
        assert!(Cli::try_parse_from([
            "lvsa", "train", "--stage", "4", "--kg", "x", "--out", "c"
        ])
        .is_err());
        let ok = Cli::try_parse_from([
            "lvsa", "gen-queries", "--kg", "x", "--tag", "pni", "--n", "1", "--out", "q"
        ]);
        assert!(ok.is_ok());
    }

    #[test]
    fn vocab_only_graph_round_trips_labels() {
        let meta = CkptMeta {
            stage: 1,
            seed: 0,
            entity_labels: vec!["a".into(), "b".into()],
            relation_labels: vec!["r".into()],
        };
        let kg = kg_from_meta(&meta).unwrap();
        assert_eq!(kg.n_entities(), 2);
        assert_eq!(kg.n_forward_relations(), 1);
        assert_eq!(kg.entities().labels(), &["a".to_string(), "b".to_string()]);
    }
}
