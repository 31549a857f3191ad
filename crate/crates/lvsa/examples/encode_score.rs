//! The core operation: compile an EFO₁ query into query vectors on the
//! differentiation tape, score every entity in one dense pass, and compare
//! the neural ranking with the exact answer set.
//!
//! Run with: `cargo run --example encode_score`

use lvsa::encoder::{encode_query, score_all_entities, ModelParams};
use lvsa::oracle::{answer_set, sample_queries, SampleMode};
use lvsa::query::Tag;
use lvsa::synth::{gen_splits, SynthSpec};
use lvsa::tape::Tape;

fn main() -> lvsa::Result<()> {
    let splits = gen_splits(&SynthSpec {
        n_entities: 40,
        n_relations: 3,
        degree: 4,
        valid_frac: 0.0,
        test_frac: 0.0,
        seed: 9,
    })?;
    let kg = &splits.full;

    // Untrained weights: scores are meaningless, but the whole pipeline —
    // classification, dependency-ordered encoding, union handling, dense
    // scoring — is structure, not weights.
    let params = ModelParams::init(16, kg.n_entities(), kg.n_forward_relations(), false, 0.01, 1)?;

    // A union query: up is (r1(a1, V) ∨ r2(a2, V)) ∧ r3(V, F) in DNF — two
    // conjuncts sharing their final hop; entities score by their best
    // disjunct. Partial mode: this graph holds nothing out.
    let q = &sample_queries(&splits, Tag::Up, 1, 55, SampleMode::Partial)?[0];
    println!("query tag: {:?}, {} disjuncts", q.tag.unwrap().as_str(), q.disjuncts.len());

    let mut tape = Tape::new(&params);
    let enc = encode_query(&mut tape, q)?;
    let (mi, md, mn) = tape.mlp_call_counts();
    println!(
        "tape: {} ops recorded, MLP invocations I/D/N = {mi}/{md}/{mn}",
        tape.len()
    );

    let scores = score_all_entities(&tape, &enc)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let answers = answer_set(kg, q)?;
    println!("\nexact answers: {:?}", answers);
    println!("top 8 of {} entities by encoder score:", scores.len());
    for &e in order.iter().take(8) {
        println!(
            "  {:>8}  {:>10.6}  {}",
            kg.entity_label(e),
            scores[e],
            if answers.contains(&e) { "∈ answer set" } else { "" }
        );
    }
    Ok(())
}
