//! Exact symbolic answering on a hand-built graph: template instantiation,
//! the grounding oracle, easy/hard answer labeling across splits, and the
//! node-role classification the encoder runs on.
//!
//! Run with: `cargo run --example grounding`

use lvsa::kg::{SplitGraphs, Vocab};
use lvsa::oracle::{answer_set, answer_set_naive, label_answers};
use lvsa::query::{classify, instantiate, Role, Tag};

fn main() -> lvsa::Result<()> {
    // A small workplace graph. Splits are cumulative: the test split adds one
    // friendship the training graph has never seen.
    let mut ents = Vocab::new();
    let (alice, bob, carol, dana) = (
        ents.intern("alice"),
        ents.intern("bob"),
        ents.intern("carol"),
        ents.intern("dana"),
    );
    let (acme, globex, paris, tokyo) = (
        ents.intern("acme"),
        ents.intern("globex"),
        ents.intern("paris"),
        ents.intern("tokyo"),
    );
    let mut rels = Vocab::new();
    let works_at = rels.intern("works_at");
    let based_in = rels.intern("based_in");
    let friend = rels.intern("friend");

    let train = vec![
        (alice, works_at, acme),
        (bob, works_at, acme),
        (carol, works_at, globex),
        (dana, works_at, globex),
        (acme, based_in, paris),
        (globex, based_in, tokyo),
        (alice, friend, bob),
        (carol, friend, dana),
    ];
    let test = vec![(bob, friend, carol)];
    let splits = SplitGraphs::new(ents, rels, train, Vec::new(), test)?;
    let kg = &splits.full;
    let n_fwd = kg.n_forward_relations();

    // 2p: "where is alice's employer based?" — a relation path from one
    // anchor through one existential variable to the free node.
    let q2p = instantiate(Tag::P2, &[alice], &[works_at, based_in])?;
    let ans = answer_set(kg, &q2p)?;
    println!(
        "2p  works_at/based_in from alice  → {:?}",
        ans.iter().map(|&e| kg.entity_label(e)).collect::<Vec<_>>()
    );
    assert_eq!(ans, answer_set_naive(kg, &q2p)?);

    // Inverse ids (r + R) walk edges backwards: works_at⁻¹(acme, ·) reads
    // "someone acme employs".
    let q2i = instantiate(Tag::I2, &[acme, alice], &[works_at + n_fwd, friend])?;
    println!(
        "2i  employed by acme ∧ friend of alice  → {:?}",
        answer_set(kg, &q2i)?
            .iter()
            .map(|&e| kg.entity_label(e))
            .collect::<Vec<_>>()
    );

    // 2in: same intersection with the friendship negated.
    let q2in = instantiate(Tag::In2, &[acme, alice], &[works_at + n_fwd, friend])?;
    println!(
        "2in employed by acme ∧ ¬friend of alice → {:?}",
        answer_set(kg, &q2in)?
            .iter()
            .map(|&e| kg.entity_label(e))
            .collect::<Vec<_>>()
    );

    // Easy answers are reachable in the training graph; hard answers need
    // held-out edges. "Friend of a friend of alice" only reaches dana through
    // the test-only edge bob—carol.
    let mut q2p_friends = instantiate(Tag::P2, &[alice], &[friend, friend])?;
    label_answers(&splits, &mut q2p_friends)?;
    let names = |ids: &std::collections::BTreeSet<usize>| {
        ids.iter().map(|&e| kg.entity_label(e)).collect::<Vec<_>>()
    };
    println!(
        "2p  friend-of-friend of alice: easy {:?}, hard {:?}",
        names(&q2p_friends.easy),
        names(&q2p_friends.hard)
    );

    // What the encoder sees: each conjunct node gets a role (anchor,
    // independent, dependent, free) in topological order; dependent slots
    // receive forward and rewritten-backward literals.
    let ann = classify(&q2p.disjuncts[0], n_fwd)?;
    println!("\n2p conjunct, encoding order {:?}:", ann.order);
    for (i, role) in ann.roles.iter().enumerate() {
        let kind = match role {
            Role::Anchor(e) => format!("anchor {}", kg.entity_label(*e)),
            Role::Independent { rel } => format!("independent via {}", kg.relation_label(*rel)),
            Role::Dependent { fwd, bwd } => {
                format!("dependent ({} fwd, {} bwd literals)", fwd.len(), bwd.len())
            }
            Role::Free { lits } => format!("free ({} literals)", lits.len()),
        };
        println!("  node {i}: {kind}");
    }
    let (mi, md, mn) = ann.mlp_counts();
    println!("  projection-MLP invocations: I {mi}, D {md}, N {mn}");
    Ok(())
}
