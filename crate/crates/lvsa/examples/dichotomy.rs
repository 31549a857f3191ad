//! The complexity dichotomy, measured: exact symbolic grounding slows down
//! combinatorially with path length while the encoder pays a constant
//! per-hop increment plus one dense score pass.
//!
//! Run with: `cargo run --release --example dichotomy`

use lvsa::encoder::ModelParams;
use lvsa::eval::bench_dichotomy;
use lvsa::synth::{gen_splits, SynthSpec};

fn main() -> lvsa::Result<()> {
    // A dense graph makes the oracle's frontier growth visible: average
    // out-degree 14 over 2 relations means each extra hop multiplies the
    // explored neighborhood by ~7.
    let splits = gen_splits(&SynthSpec {
        n_entities: 100,
        n_relations: 2,
        degree: 14,
        valid_frac: 0.0,
        test_frac: 0.0,
        seed: 71,
    })?;
    let kg = &splits.full;
    println!(
        "graph: {} entities, {} relations, {} forward triples",
        kg.n_entities(),
        kg.n_forward_relations(),
        kg.n_forward_triples()
    );

    // Timing needs no training — encoder cost is architecture, not weights.
    let params = ModelParams::init(8, kg.n_entities(), kg.n_forward_relations(), false, 0.01, 73)?;
    let rep = bench_dichotomy(&params, kg, 100, 5)?;

    println!(
        "\n{:>4} {:>12} {:>12}   MLP calls (I, D, N)",
        "tag", "oracle", "encoder"
    );
    for t in &rep.tags {
        println!(
            "{:>4} {:>10.1}µs {:>10.1}µs   observed {:?} == expected {:?}",
            t.tag,
            t.oracle_s * 1e6,
            t.encoder_s * 1e6,
            t.mlp_calls,
            t.mlp_expected
        );
        assert_eq!(t.mlp_calls, t.mlp_expected);
    }
    println!(
        "\n3p/1p time ratio: oracle ×{:.1}, encoder ×{:.2}",
        rep.oracle_ratio.unwrap(),
        rep.encoder_ratio.unwrap()
    );
    println!("(medians of 5 repetitions of the per-query mean, single-threaded)");
    Ok(())
}
