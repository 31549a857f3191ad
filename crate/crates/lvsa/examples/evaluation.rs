//! Filtered-ranking evaluation: train a small model, sample benchmark-style
//! test queries for several shapes, and print the per-shape metric table.
//!
//! Hard answers (those needing held-out edges) are what gets ranked; easy
//! answers and other hard answers are filtered out of the competition.
//!
//! Run with: `cargo run --release --example evaluation`

use lvsa::config::Config;
use lvsa::encoder::ModelParams;
use lvsa::eval::evaluate;
use lvsa::oracle::{sample_queries, SampleMode};
use lvsa::query::Tag;
use lvsa::synth::{gen_splits, SynthSpec};
use lvsa::trainer::{train_stage, TrainData, TrainState};

fn main() -> lvsa::Result<()> {
    let splits = gen_splits(&SynthSpec {
        n_entities: 60,
        n_relations: 4,
        degree: 6,
        valid_frac: 0.1,
        test_frac: 0.1,
        seed: 2,
    })?;

    let mut cfg = Config::default();
    cfg.d = 32;
    cfg.seed = 5;
    cfg.lr = 2e-3;
    cfg.batch_size = 64;
    cfg.epochs = 80;

    let params = ModelParams::init(
        cfg.d,
        splits.full.n_entities(),
        splits.full.n_forward_relations(),
        cfg.tie_inverse_conjugate,
        cfg.leaky_slope,
        cfg.seed,
    )?;
    let mut state = TrainState::new(params);
    let d1 = TrainData::one_hop_from_triples(&splits.train)?;
    train_stage(&mut state, &d1, 1, &cfg, &mut |_, _| true)?;
    let mut paths = sample_queries(&splits, Tag::P2, 120, 11, SampleMode::Partial)?;
    paths.extend(sample_queries(&splits, Tag::P3, 120, 13, SampleMode::Partial)?);
    let d2 = TrainData::from_queries(paths);
    train_stage(&mut state, &d2, 2, &cfg, &mut |_, _| true)?;

    // Benchmark regime: full-graph walks, queries keep only shapes with at
    // least one hard answer. The sampler labels easy/hard via the oracle.
    let mut queries = Vec::new();
    for tag in [Tag::P1, Tag::P2, Tag::P3, Tag::I2, Tag::I3, Tag::U2, Tag::Ip] {
        queries.extend(sample_queries(&splits, tag, 60, 17, SampleMode::Full)?);
    }
    let report = evaluate(&state.params, &queries)?;

    println!(
        "{:>4} {:>6} {:>8} {:>8} {:>8} {:>8}",
        "tag", "n", "MRR", "H@1", "H@3", "H@10"
    );
    for (tag, m) in &report.per_tag {
        println!(
            "{:>4} {:>6} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            tag, m.n, m.mrr, m.h1, m.h3, m.h10
        );
    }
    if let Some(ap) = report.a_p {
        println!("\nmean MRR over positive shapes present: {ap:.4}");
    }
    println!(
        "{} queries evaluated, {} skipped (no hard answers)",
        report.n_queries, report.n_skipped
    );

    // Reports serialize to JSON for downstream tooling — identical content
    // to what the CLI's eval subcommand writes.
    println!("\nreport as JSON:\n{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
