//! Seeded synthetic graphs and query sampling across all 14 benchmark
//! templates, with easy/hard answer statistics per shape.
//!
//! Run with: `cargo run --example query_sampling`

use lvsa::oracle::{sample_queries, SampleMode};
use lvsa::query::{serialize_query, ALL_TAGS};
use lvsa::synth::{gen_splits, SynthSpec};

fn main() -> lvsa::Result<()> {
    // A reproducible random graph: 80 entities, 6 relations, average out-degree
    // 5, with 10% of forward triples held out for validation and 10% for test
    // (full-mode sampling needs enough held-out edges to find hard answers).
    let splits = gen_splits(&SynthSpec {
        n_entities: 80,
        n_relations: 6,
        degree: 5,
        valid_frac: 0.1,
        test_frac: 0.1,
        seed: 42,
    })?;
    println!(
        "graph: {} entities, {} relations, {} forward triples ({} train / {} +valid / {} full)\n",
        splits.full.n_entities(),
        splits.full.n_forward_relations(),
        splits.full.n_forward_triples(),
        splits.train.n_forward_triples(),
        splits.train_valid.n_forward_triples(),
        splits.full.n_forward_triples(),
    );

    // Full mode walks the complete graph and keeps only queries with at least
    // one hard answer (an answer unreachable without held-out edges) — the
    // benchmark evaluation regime. Partial mode walks the training graph and
    // guarantees easy answers — the training regime.
    println!("{:>4}  {:>7} {:>9} {:>9}   mode=full", "tag", "queries", "easy/q", "hard/q");
    for tag in ALL_TAGS {
        let queries = sample_queries(&splits, tag, 30, 7, SampleMode::Full)?;
        let n = queries.len() as f64;
        let easy: usize = queries.iter().map(|q| q.easy.len()).sum();
        let hard: usize = queries.iter().map(|q| q.hard.len()).sum();
        println!(
            "{:>4}  {:>7} {:>9.2} {:>9.2}",
            tag.as_str(),
            queries.len(),
            easy as f64 / n,
            hard as f64 / n
        );
    }

    // One sampled query in the JSONL wire form used by the CLI.
    let q = &sample_queries(&splits, lvsa::query::Tag::Pi, 1, 99, SampleMode::Full)?[0];
    println!("\nsample pi query as JSONL:\n{}", serialize_query(q, &splits.full)?);
    Ok(())
}
