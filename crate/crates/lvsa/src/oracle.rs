//! Exact symbolic query answering (the grounding oracle), answer labeling,
//! and seeded query sampling.
//!
//! The oracle enumerates variable assignments in topological order with
//! adjacency pruning: a node's candidates come from intersecting the
//! neighbor lists of its positive incoming literals (whose sources are
//! already assigned — that's what the topological order buys), then negated
//! incoming literals filter by non-membership. Nodes with no positive
//! incoming literal fall back to full-vocabulary enumeration. The naive
//! reference ([`answer_set_naive`]) enumerates *every* assignment of all
//! variables — `O(|V|^{k+1})` — and exists so the pruned path has an
//! independent dual route to check against.
//!
//! Negation semantics: non-membership is always evaluated against the most
//! complete available graph. [`label_answers`] therefore computes easy
//! answers with positives on train+valid but negations on the full graph.

use std::collections::{BTreeSet, HashSet};
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kg::{EntityId, Kg, RelationId, SplitGraphs, Triple};
use crate::query::{instantiate, toposort, Conjunct, NodeKind, QueryGraph, Tag};
use crate::rng::seeded_rng;

// ---------------------------------------------------------------------------
// Pruned enumeration
// ---------------------------------------------------------------------------

/// Answers of one conjunct: positives checked on `pos`, negations on `neg`.
fn conjunct_answers(pos: &Kg, neg: &Kg, c: &Conjunct) -> Result<BTreeSet<EntityId>> {
    let order = toposort(c)?;
    let free = c.free_index();
    let mut assign: Vec<Option<EntityId>> = vec![None; c.nodes.len()];
    let mut answers = BTreeSet::new();

    fn recurse(
        pos: &Kg,
        neg: &Kg,
        c: &Conjunct,
        order: &[usize],
        depth: usize,
        free: usize,
        assign: &mut Vec<Option<EntityId>>,
        answers: &mut BTreeSet<EntityId>,
    ) {
        if depth == order.len() {
            answers.insert(assign[free].expect("free node assigned"));
            return;
        }
        let node = order[depth];
        // All incoming edges have assigned sources by topological order.
        let pos_in: Vec<(EntityId, RelationId)> = c
            .edges
            .iter()
            .filter(|e| e.dst == node && !e.negated)
            .map(|e| (assign[e.src].expect("topo order"), e.rel))
            .collect();
        let neg_in: Vec<(EntityId, RelationId)> = c
            .edges
            .iter()
            .filter(|e| e.dst == node && e.negated)
            .map(|e| (assign[e.src].expect("topo order"), e.rel))
            .collect();

        let ok = |cand: EntityId| neg_in.iter().all(|&(u, r)| !neg.has_triple(u, r, cand));

        let step = |cand: EntityId,
                    assign: &mut Vec<Option<EntityId>>,
                    answers: &mut BTreeSet<EntityId>| {
            assign[node] = Some(cand);
            recurse(pos, neg, c, order, depth + 1, free, assign, answers);
            assign[node] = None;
        };

        match c.nodes[node] {
            NodeKind::Anchor(e) => {
                // Grounded-variable graphs can carry incoming edges on
                // anchors; they act as membership constraints.
                if pos_in.iter().all(|&(u, r)| pos.has_triple(u, r, e)) && ok(e) {
                    step(e, assign, answers);
                }
            }
            NodeKind::Var(_) | NodeKind::Free => {
                if pos_in.is_empty() {
                    // Unconstrained slot: full-vocabulary fallback.
                    for cand in 0..pos.n_entities() {
                        if ok(cand) {
                            step(cand, assign, answers);
                        }
                    }
                } else {
                    // Intersect neighbor lists, smallest list driving.
                    let (u0, r0) = pos_in
                        .iter()
                        .copied()
                        .min_by_key(|&(u, r)| pos.neighbors(u, r).len())
                        .expect("non-empty");
                    for &cand in pos.neighbors(u0, r0) {
                        let member = pos_in
                            .iter()
                            .all(|&(u, r)| (u, r) == (u0, r0) || pos.has_triple(u, r, cand));
                        if member && ok(cand) {
                            step(cand, assign, answers);
                        }
                    }
                }
            }
        }
    }

    recurse(pos, neg, c, &order, 0, free, &mut assign, &mut answers);
    Ok(answers)
}

/// Exact answer set with separate graphs for positive literals (`pos`) and
/// negated literals (`neg`). Disjuncts answer independently and union.
pub fn answer_set_split(pos: &Kg, neg: &Kg, q: &QueryGraph) -> Result<BTreeSet<EntityId>> {
    let mut out = BTreeSet::new();
    for c in &q.disjuncts {
        out.append(&mut conjunct_answers(pos, neg, c)?);
    }
    Ok(out)
}

/// Exact answer set on one graph.
pub fn answer_set(kg: &Kg, q: &QueryGraph) -> Result<BTreeSet<EntityId>> {
    answer_set_split(kg, kg, q)
}

// ---------------------------------------------------------------------------
// Naive enumeration (reference dual route)
// ---------------------------------------------------------------------------

/// Reference oracle: enumerates every assignment of all existential
/// variables and the free node over the full vocabulary and checks each
/// literal directly. Exponential; use only on tiny graphs.
pub fn answer_set_naive(kg: &Kg, q: &QueryGraph) -> Result<BTreeSet<EntityId>> {
    let n = kg.n_entities();
    let mut out = BTreeSet::new();
    for c in &q.disjuncts {
        let slots: Vec<usize> = (0..c.nodes.len())
            .filter(|&i| !matches!(c.nodes[i], NodeKind::Anchor(_)))
            .collect();
        let free = c.free_index();
        let mut val: Vec<EntityId> = c
            .nodes
            .iter()
            .map(|k| match k {
                NodeKind::Anchor(e) => *e,
                _ => 0,
            })
            .collect();
        let mut odo = vec![0usize; slots.len()];
        loop {
            for (slot, &node) in odo.iter().zip(&slots) {
                val[node] = *slot;
            }
            let sat = c.edges.iter().all(|e| {
                let holds = kg.has_triple(val[e.src], e.rel, val[e.dst]);
                holds != e.negated
            });
            if sat {
                out.insert(val[free]);
            }
            // Odometer increment.
            let mut i = 0;
            loop {
                if i == odo.len() {
                    break;
                }
                odo[i] += 1;
                if odo[i] < n {
                    break;
                }
                odo[i] = 0;
                i += 1;
            }
            if i == odo.len() {
                break;
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Answer labeling
// ---------------------------------------------------------------------------

/// Fills a query's easy/hard answer sets: easy answers hold with positives on
/// train+valid (negations on the full graph); hard answers hold on the full
/// graph and are not easy. The sets are disjoint by construction.
pub fn label_answers(splits: &SplitGraphs, q: &mut QueryGraph) -> Result<()> {
    let easy = answer_set_split(&splits.train_valid, &splits.full, q)?;
    let full = answer_set(&splits.full, q)?;
    q.hard = full.difference(&easy).copied().collect();
    q.easy = easy;
    Ok(())
}

// ---------------------------------------------------------------------------
// Seeded query sampling
// ---------------------------------------------------------------------------

/// Which graph sampling walks on, and which answer set must be non-empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    /// Walks on the full graph; keeps queries with non-empty *hard* answers
    /// (evaluation-style sets).
    Full,
    /// Walks on train+valid; keeps queries with non-empty *easy* answers
    /// (training-style sets).
    Partial,
}

fn random_triple(kg: &Kg, rng: &mut ChaCha8Rng) -> Option<Triple> {
    let ts = kg.triples();
    if ts.is_empty() {
        return None;
    }
    Some(ts[rng.gen_range(0..ts.len())])
}

fn random_out_edge(kg: &Kg, e: EntityId, rng: &mut ChaCha8Rng) -> Option<Triple> {
    let es = kg.out_edges(e);
    if es.is_empty() {
        return None;
    }
    Some(es[rng.gen_range(0..es.len())])
}

/// A random edge *into* `t`: samples an out-edge of `t` and inverts it.
/// Inverse closure guarantees the two views are in bijection.
fn random_in_edge(kg: &Kg, t: EntityId, rng: &mut ChaCha8Rng) -> Option<(EntityId, RelationId)> {
    let (_, r, a) = random_out_edge(kg, t, rng)?;
    Some((a, kg.inverse(r)))
}

/// A relation id `r` with `¬r(src, dst)` on the `check` graph.
fn random_absent_rel(
    check: &Kg,
    src: EntityId,
    dst: EntityId,
    rng: &mut ChaCha8Rng,
) -> Option<RelationId> {
    for _ in 0..8 {
        let r = rng.gen_range(0..check.n_relation_ids());
        if !check.has_triple(src, r, dst) {
            return Some(r);
        }
    }
    None
}

/// A random edge `(a, r, ·)` whose head/relation pair does *not* reach
/// `avoid` on the `check` graph (witness preservation for negated branches).
fn random_nonreaching_branch(
    walk: &Kg,
    check: &Kg,
    avoid: EntityId,
    rng: &mut ChaCha8Rng,
) -> Option<(EntityId, RelationId)> {
    for _ in 0..8 {
        let (a, r, _) = random_triple(walk, rng)?;
        if !check.has_triple(a, r, avoid) {
            return Some((a, r));
        }
    }
    None
}

/// Up to `k` in-edges of `t` with pairwise-distinct `(head, rel)` pairs.
fn distinct_in_edges(
    kg: &Kg,
    t: EntityId,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<(EntityId, RelationId)>> {
    let mut out: Vec<(EntityId, RelationId)> = Vec::with_capacity(k);
    for _ in 0..(8 * k) {
        if out.len() == k {
            break;
        }
        let e = random_in_edge(kg, t, rng)?;
        if !out.contains(&e) {
            out.push(e);
        }
    }
    (out.len() == k).then_some(out)
}

/// One walk-based instantiation attempt. `walk` is the mode's graph; `check`
/// is the full graph (negated literals must not hold there, so the walked
/// witness answer survives labeling).
fn try_sample(
    walk: &Kg,
    check: &Kg,
    tag: Tag,
    rng: &mut ChaCha8Rng,
) -> Option<(Vec<EntityId>, Vec<RelationId>)> {
    match tag {
        Tag::P1 => {
            let (a, r, _) = random_triple(walk, rng)?;
            Some((vec![a], vec![r]))
        }
        Tag::P2 => {
            let (a, r1, v) = random_triple(walk, rng)?;
            let (_, r2, _) = random_out_edge(walk, v, rng)?;
            Some((vec![a], vec![r1, r2]))
        }
        Tag::P3 => {
            let (a, r1, v1) = random_triple(walk, rng)?;
            let (_, r2, v2) = random_out_edge(walk, v1, rng)?;
            let (_, r3, _) = random_out_edge(walk, v2, rng)?;
            Some((vec![a], vec![r1, r2, r3]))
        }
        Tag::I2 => {
            let (_, _, t) = random_triple(walk, rng)?;
            let es = distinct_in_edges(walk, t, 2, rng)?;
            Some((vec![es[0].0, es[1].0], vec![es[0].1, es[1].1]))
        }
        Tag::I3 => {
            let (_, _, t) = random_triple(walk, rng)?;
            let es = distinct_in_edges(walk, t, 3, rng)?;
            Some((
                vec![es[0].0, es[1].0, es[2].0],
                vec![es[0].1, es[1].1, es[2].1],
            ))
        }
        Tag::Pi => {
            let (a1, r1, v) = random_triple(walk, rng)?;
            let (_, r2, t) = random_out_edge(walk, v, rng)?;
            let (a2, r3) = random_in_edge(walk, t, rng)?;
            Some((vec![a1, a2], vec![r1, r2, r3]))
        }
        Tag::Ip => {
            let (_, _, v) = random_triple(walk, rng)?;
            let es = distinct_in_edges(walk, v, 2, rng)?;
            let (_, r3, _) = random_out_edge(walk, v, rng)?;
            Some((vec![es[0].0, es[1].0], vec![es[0].1, es[1].1, r3]))
        }
        Tag::U2 => {
            let (a1, r1, _) = random_triple(walk, rng)?;
            for _ in 0..8 {
                let (a2, r2, _) = random_triple(walk, rng)?;
                if (a2, r2) != (a1, r1) {
                    return Some((vec![a1, a2], vec![r1, r2]));
                }
            }
            None
        }
        Tag::Up => {
            let (a1, r1, v1) = random_triple(walk, rng)?;
            let (_, r3, _) = random_out_edge(walk, v1, rng)?;
            for _ in 0..8 {
                let (a2, r2, _) = random_triple(walk, rng)?;
                if (a2, r2) != (a1, r1) {
                    return Some((vec![a1, a2], vec![r1, r2, r3]));
                }
            }
            None
        }
        Tag::In2 => {
            let (a1, r1, t) = random_triple(walk, rng)?;
            let (a2, r2) = random_nonreaching_branch(walk, check, t, rng)?;
            Some((vec![a1, a2], vec![r1, r2]))
        }
        Tag::In3 => {
            let (_, _, t) = random_triple(walk, rng)?;
            let es = distinct_in_edges(walk, t, 2, rng)?;
            let (a3, r3) = random_nonreaching_branch(walk, check, t, rng)?;
            Some((vec![es[0].0, es[1].0, a3], vec![es[0].1, es[1].1, r3]))
        }
        Tag::Inp => {
            let (a1, r1, v) = random_triple(walk, rng)?;
            let (a2, r2) = random_nonreaching_branch(walk, check, v, rng)?;
            let (_, r3, _) = random_out_edge(walk, v, rng)?;
            Some((vec![a1, a2], vec![r1, r2, r3]))
        }
        Tag::Pin => {
            let (a1, r1, v) = random_triple(walk, rng)?;
            let (_, r2, t) = random_out_edge(walk, v, rng)?;
            let (a2, r3) = random_nonreaching_branch(walk, check, t, rng)?;
            Some((vec![a1, a2], vec![r1, r2, r3]))
        }
        Tag::Pni => {
            let (a1, r1, v) = random_triple(walk, rng)?;
            let (a2, r3, t) = random_triple(walk, rng)?;
            let r2 = random_absent_rel(check, v, t, rng)?;
            Some((vec![a1, a2], vec![r1, r2, r3]))
        }
    }
}

/// Samples `n` labeled queries of shape `tag`, rejecting per `mode`.
/// Deterministic for fixed inputs: attempt `i` uses the sub-generator
/// `seeded_rng(seed, i)` (see the crate's seed-derivation rule), so results
/// don't depend on how many attempts earlier queries consumed. Structural
/// duplicates are dropped. Budget: `100·n` attempts, then a sampling error.
pub fn sample_queries(
    splits: &SplitGraphs,
    tag: Tag,
    n: usize,
    seed: u64,
    mode: SampleMode,
) -> Result<Vec<QueryGraph>> {
    let walk = match mode {
        SampleMode::Full => &splits.full,
        SampleMode::Partial => &splits.train_valid,
    };
    let budget = 100 * n as u64;
    let mut out = Vec::with_capacity(n);
    let mut seen: HashSet<QueryGraph> = HashSet::new();
    for attempt in 0..budget {
        if out.len() == n {
            break;
        }
        let mut rng = seeded_rng(seed, attempt);
        let Some((anchors, rels)) = try_sample(walk, &splits.full, tag, &mut rng) else {
            continue;
        };
        let mut q = instantiate(tag, &anchors, &rels)?;
        label_answers(splits, &mut q)?;
        let keep = match mode {
            SampleMode::Full => !q.hard.is_empty(),
            SampleMode::Partial => !q.easy.is_empty(),
        };
        if keep && seen.insert(q.clone()) {
            out.push(q);
        }
    }
    if out.len() < n {
        return Err(Error::Sampling(format!(
            "sampled only {}/{n} distinct {tag} queries within {budget} attempts",
            out.len()
        )));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Latency probe
// ---------------------------------------------------------------------------

/// Mean wall-clock seconds per `answer_set` call over `n` sampled queries of
/// shape `tag` on `kg` (sampling seed fixed to 0 for reproducibility).
pub fn latency_probe(kg: &Kg, tag: Tag, n: usize) -> Result<f64> {
    let splits = SplitGraphs::degenerate(kg.clone());
    let queries = sample_queries(&splits, tag, n, 0, SampleMode::Partial)?;
    let start = Instant::now();
    for q in &queries {
        std::hint::black_box(answer_set(kg, q)?);
    }
    Ok(start.elapsed().as_secs_f64() / queries.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::Vocab;
    use crate::query::{serialize_query, ALL_TAGS};

    /// A small diamond graph, by hand:
    ///   a -p-> x, a -p-> y, x -q-> t, y -q-> t, b -p-> t, b -q-> z
    fn diamond() -> Kg {
        let mut e = Vocab::new();
        let mut r = Vocab::new();
        for s in ["a", "b", "x", "y", "t", "z"] {
            e.intern(s);
        }
        for s in ["p", "q"] {
            r.intern(s);
        }
        let (a, b, x, y, t, z) = (0, 1, 2, 3, 4, 5);
        let (p, q) = (0, 1);
        Kg::from_triples(
            e,
            r,
            vec![(a, p, x), (a, p, y), (x, q, t), (y, q, t), (b, p, t), (b, q, z)],
        )
        .unwrap()
    }

    fn set(ids: &[usize]) -> BTreeSet<usize> {
        ids.iter().copied().collect()
    }

    #[test]
    fn hand_checked_answers() {
        let kg = diamond();
        let (a, b) = (0, 1);
        let (p, q) = (0, 1);
        // 1p: p(a, ?) → {x, y}
        let q1 = instantiate(Tag::P1, &[a], &[p]).unwrap();
        assert_eq!(answer_set(&kg, &q1).unwrap(), set(&[2, 3]));
        // 2p: p(a,V) ∧ q(V,?) → {t}
        let q2 = instantiate(Tag::P2, &[a], &[p, q]).unwrap();
        assert_eq!(answer_set(&kg, &q2).unwrap(), set(&[4]));
        // 2i: p(a,?) ∧ q(b,?) → {x,y} ∩ {z} = ∅
        let q3 = instantiate(Tag::I2, &[a, b], &[p, q]).unwrap();
        assert_eq!(answer_set(&kg, &q3).unwrap(), set(&[]));
        // 2i with inverse: q⁻¹(t→?)... p(a,?) ∩ q⁻¹(... use p(b,?) ∩ p(a,?):
        // p(b,?) = {t}; p(a,?) = {x,y} → ∅; instead q(x,?) ∩ p(b,?) = {t}.
        let q4 = instantiate(Tag::I2, &[2, b], &[q, p]).unwrap();
        assert_eq!(answer_set(&kg, &q4).unwrap(), set(&[4]));
        // 2in: p(a,?) ∧ ¬p(… pick branch that prunes y: neg branch q⁻¹? use
        // 2in(a, x; p, q): p(a,?) = {x,y} minus q(x,?) = {t} → {x,y}.
        let q5 = instantiate(Tag::In2, &[a, 2], &[p, q]).unwrap();
        assert_eq!(answer_set(&kg, &q5).unwrap(), set(&[2, 3]));
        // 2u: p(a,?) ∪ q(b,?) = {x,y,z}
        let q6 = instantiate(Tag::U2, &[a, b], &[p, q]).unwrap();
        assert_eq!(answer_set(&kg, &q6).unwrap(), set(&[2, 3, 5]));
    }

    #[test]
    fn negation_excludes_on_the_checking_graph() {
        let kg = diamond();
        // 2in(a, y; p, q): p(a,?) = {x,y}; q(y,?) = {t}; nothing excluded
        // from {x,y} → {x,y}. Now 2in where exclusion bites:
        // candidates via p⁻¹(t,?) = {x,y,b}… simpler: 3in-free hand case
        // below; here check inp: p(a,V) ∧ ¬q(x,V) ∧ q(V,?):
        // V ∈ {x,y} minus q(x,·)={t} → V ∈ {x,y}; q(V,?) → {t}.
        let q1 = instantiate(Tag::Inp, &[0, 2], &[0, 1, 1]).unwrap();
        assert_eq!(answer_set(&kg, &q1).unwrap(), set(&[4]));
        // pin: p(b,V)∧… b -p-> t only: V=t; q(t,?) = ∅ under forward q… use
        // inverse: q⁻¹(t,?) = {x,y}; ¬p(a,?) removes both → ∅.
        let inv_q = kg.inverse(1);
        let q2 = instantiate(Tag::Pin, &[1, 0], &[0, inv_q, 0]).unwrap();
        assert_eq!(answer_set(&kg, &q2).unwrap(), set(&[]));
    }

    #[test]
    fn dnf_answers_are_the_union_of_conjunct_answers() {
        let kg = diamond();
        for tag in [Tag::U2, Tag::Up] {
            let (na, nr) = crate::query::template_arity(tag);
            let q = instantiate(tag, &vec![0; na].iter().enumerate().map(|(i, _)| i).collect::<Vec<_>>(), &vec![0; nr]).unwrap();
            let whole = answer_set(&kg, &q).unwrap();
            let mut union = BTreeSet::new();
            for c in &q.disjuncts {
                let single = QueryGraph {
                    tag: None,
                    disjuncts: vec![c.clone()],
                    easy: BTreeSet::new(),
                    hard: BTreeSet::new(),
                };
                union.extend(answer_set(&kg, &single).unwrap());
            }
            assert_eq!(whole, union, "union law for {tag}");
        }
    }

    #[test]
    fn pruned_matches_naive_on_random_small_graphs() {
        // Miniature of the acceptance dual-route check.
        for seed in 0..3u64 {
            let mut rng = seeded_rng(seed, 99);
            let mut e = Vocab::new();
            let mut r = Vocab::new();
            let n = 8;
            for i in 0..n {
                e.intern(&format!("e{i}"));
            }
            for i in 0..2 {
                r.intern(&format!("r{i}"));
            }
            let triples: Vec<Triple> = (0..24)
                .map(|_| {
                    (
                        rng.gen_range(0..n),
                        rng.gen_range(0..2usize),
                        rng.gen_range(0..n),
                    )
                })
                .collect();
            let kg = Kg::from_triples(e, r, triples).unwrap();
            let splits = SplitGraphs::degenerate(kg.clone());
            for tag in ALL_TAGS {
                let queries =
                    match sample_queries(&splits, tag, 3, seed, SampleMode::Partial) {
                        Ok(qs) => qs,
                        Err(Error::Sampling(_)) => continue, // tiny graph may lack a shape
                        Err(other) => panic!("{other}"),
                    };
                for q in &queries {
                    assert_eq!(
                        answer_set(&kg, q).unwrap(),
                        answer_set_naive(&kg, q).unwrap(),
                        "dual-route mismatch for {tag} seed {seed}"
                    );
                }
            }
        }
    }

    #[test]
    fn labeling_splits_easy_and_hard() {
        // train: p(a,x); test adds p(a,y) → for 1p(a;p), x easy, y hard.
        let mut e = Vocab::new();
        let mut r = Vocab::new();
        for s in ["a", "x", "y"] {
            e.intern(s);
        }
        r.intern("p");
        let splits = SplitGraphs::new(
            e,
            r,
            vec![(0, 0, 1)],
            vec![],
            vec![(0, 0, 2)],
        )
        .unwrap();
        let mut q = instantiate(Tag::P1, &[0], &[0]).unwrap();
        label_answers(&splits, &mut q).unwrap();
        assert_eq!(q.easy, set(&[1]));
        assert_eq!(q.hard, set(&[2]));
    }

    #[test]
    fn easy_labeling_checks_negation_on_full_graph() {
        // train: p(a,x), p(b,z); test: q(b,x).
        // 2in(a,b; p,q) = p(a,?) ∧ ¬q(b,?):
        // On train+valid alone x would qualify, but the negation is checked
        // on the full graph where q(b,x) exists → easy = ∅, hard = ∅.
        let mut e = Vocab::new();
        let mut r = Vocab::new();
        for s in ["a", "b", "x", "z"] {
            e.intern(s);
        }
        for s in ["p", "q"] {
            r.intern(s);
        }
        let splits = SplitGraphs::new(
            e,
            r,
            vec![(0, 0, 2), (1, 0, 3)],
            vec![],
            vec![(1, 1, 2)],
        )
        .unwrap();
        let mut q = instantiate(Tag::In2, &[0, 1], &[0, 1]).unwrap();
        label_answers(&splits, &mut q).unwrap();
        assert!(q.easy.is_empty(), "full-graph negation must already bind easy answers");
        assert!(q.hard.is_empty());
    }

    #[test]
    fn positive_answers_are_monotone_in_the_graph() {
        let kg = diamond();
        // Remove one forward triple to get a subgraph.
        let sub = {
            let fwd: Vec<Triple> = kg
                .triples()
                .iter()
                .copied()
                .filter(|&(_, r, _)| r < kg.n_forward_relations())
                .collect();
            Kg::from_triples(
                kg.entities().clone(),
                kg.relations().clone(),
                fwd[..fwd.len() - 1].to_vec(),
            )
            .unwrap()
        };
        for tag in [Tag::P1, Tag::P2, Tag::I2, Tag::U2] {
            let (na, nr) = crate::query::template_arity(tag);
            let q = instantiate(tag, &(0..na).collect::<Vec<_>>(), &vec![0; nr]).unwrap();
            let small = answer_set(&sub, &q).unwrap();
            let big = answer_set(&kg, &q).unwrap();
            assert!(small.is_subset(&big), "monotonicity for {tag}");
        }
    }

    #[test]
    fn sampling_is_deterministic_and_respects_mode() {
        let kg = diamond();
        let splits = SplitGraphs::degenerate(kg.clone());
        let a = sample_queries(&splits, Tag::P2, 4, 11, SampleMode::Partial).unwrap();
        let b = sample_queries(&splits, Tag::P2, 4, 11, SampleMode::Partial).unwrap();
        let ser = |qs: &[QueryGraph]| -> Vec<String> {
            qs.iter().map(|q| serialize_query(q, &kg).unwrap()).collect()
        };
        assert_eq!(ser(&a), ser(&b), "same seed must reproduce byte-identically");
        for q in &a {
            assert!(!q.easy.is_empty(), "partial mode guarantees easy answers");
        }
    }

    #[test]
    fn sampling_budget_exhaustion_is_an_error() {
        // One triple can't make 5 distinct 1p queries.
        let mut e = Vocab::new();
        let mut r = Vocab::new();
        e.intern("a");
        e.intern("b");
        r.intern("p");
        let kg = Kg::from_triples(e, r, vec![(0, 0, 1)]).unwrap();
        let splits = SplitGraphs::degenerate(kg);
        match sample_queries(&splits, Tag::P1, 5, 0, SampleMode::Partial) {
            Err(Error::Sampling(_)) => {}
            other => panic!("expected sampling error, got {other:?}"),
        }
    }

    #[test]
    fn grounded_anchor_with_incoming_edges_is_a_membership_constraint() {
        let kg = diamond();
        // 2p: p(a,V) ∧ q(V,?); ground V := x → answers {t}; V := b → ∅.
        let q = instantiate(Tag::P2, &[0], &[0, 1]).unwrap();
        let gx = QueryGraph {
            tag: None,
            disjuncts: vec![q.disjuncts[0].ground_var(0, 2)],
            easy: BTreeSet::new(),
            hard: BTreeSet::new(),
        };
        assert_eq!(answer_set(&kg, &gx).unwrap(), set(&[4]));
        let gb = QueryGraph {
            tag: None,
            disjuncts: vec![q.disjuncts[0].ground_var(0, 1)],
            easy: BTreeSet::new(),
            hard: BTreeSet::new(),
        };
        assert_eq!(answer_set(&kg, &gb).unwrap(), set(&[]));
    }

    #[test]
    fn latency_probe_runs() {
        let kg = diamond();
        let t = latency_probe(&kg, Tag::P1, 3).unwrap();
        assert!(t >= 0.0 && t.is_finite());
    }
}
