//! Opening the box: after encoding a multi-hop query, per-variable slot
//! scores are checked against the exact oracle, and a greedy whole-path
//! grounding is verified literal by literal on the graph.
//!
//! Run with: `cargo run --release --example interpret`

use lvsa::config::Config;
use lvsa::encoder::ModelParams;
use lvsa::eval::{interpret_path, interpret_variable};
use lvsa::oracle::{sample_queries, SampleMode};
use lvsa::query::Tag;
use lvsa::synth::{gen_splits, SynthSpec};
use lvsa::trainer::{train_stage, TrainData, TrainState};

fn main() -> lvsa::Result<()> {
    let splits = gen_splits(&SynthSpec {
        n_entities: 60,
        n_relations: 4,
        degree: 6,
        valid_frac: 0.05,
        test_frac: 0.05,
        seed: 21,
    })?;
    let kg = &splits.full;

    let mut cfg = Config::default();
    cfg.d = 32;
    cfg.seed = 23;
    cfg.lr = 2e-3;
    cfg.batch_size = 64;
    cfg.epochs = 80;
    let params = ModelParams::init(
        cfg.d,
        kg.n_entities(),
        kg.n_forward_relations(),
        cfg.tie_inverse_conjugate,
        cfg.leaky_slope,
        cfg.seed,
    )?;
    let mut state = TrainState::new(params);
    let d1 = TrainData::one_hop_from_triples(&splits.train)?;
    train_stage(&mut state, &d1, 1, &cfg, &mut |_, _| true)?;
    let mut paths = sample_queries(&splits, Tag::P2, 120, 25, SampleMode::Partial)?;
    paths.extend(sample_queries(&splits, Tag::P3, 120, 27, SampleMode::Partial)?);
    let d2 = TrainData::from_queries(paths);
    train_stage(&mut state, &d2, 2, &cfg, &mut |_, _| true)?;

    // A fresh 3p query the model never trained on.
    let q = &sample_queries(&splits, Tag::P3, 1, 1234, SampleMode::Partial)?[0];
    println!("query: 3-hop path, {} labeled answers", q.easy.len());

    // Each existential variable's slot vector ranks all entities; the oracle
    // says which groundings actually extend to a full assignment.
    for var in [0usize, 1] {
        let rep = interpret_variable(&state.params, kg, q, var, 5)?;
        println!(
            "\nvariable {} (slot {}): {} oracle-valid groundings, MRR {:.3} (random {:.3})",
            rep.var, rep.slot, rep.n_correct, rep.mrr, rep.random_mrr
        );
        for c in &rep.top {
            println!(
                "  {:>10}  score {:>8.3}  {}",
                kg.entity_label(c.entity),
                c.score,
                if c.correct { "✓ valid" } else { "✗ not a valid grounding" }
            );
        }
    }

    // Greedy argmax per slot, then every literal checked on the graph.
    let groundings = interpret_path(&state.params, kg, q)?;
    for g in &groundings {
        println!("\ngreedy grounding of disjunct {}:", g.disjunct);
        for a in &g.assignment {
            match a.score {
                Some(s) => println!(
                    "  slot {} ← {} (score {:.3})",
                    a.slot,
                    kg.entity_label(a.entity),
                    s
                ),
                None => println!("  slot {} = anchor {}", a.slot, kg.entity_label(a.entity)),
            }
        }
        for l in &g.literals {
            println!(
                "  {}{}(slot{} → slot{}): {}",
                if l.negated { "¬" } else { "" },
                kg.relation_label(l.rel),
                l.src_slot,
                l.dst_slot,
                if l.satisfied { "satisfied" } else { "violated" }
            );
        }
        println!(
            "  whole path {}",
            if g.satisfied { "grounds in the graph" } else { "does not ground" }
        );
    }
    Ok(())
}
