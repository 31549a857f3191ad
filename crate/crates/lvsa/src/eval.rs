//! Filtered ranking metrics, interpretability probes, and the
//! complexity-dichotomy benchmark.
//!
//! Ranking follows the filtered protocol: a hard answer's rank counts only
//! strictly-better-scoring entities that are neither known answers (easy or
//! hard) nor the answer itself, so ties resolve optimistically. Reported
//! metrics are averaged per query over its hard answers, then across queries
//! of each shape.
//!
//! Interpretability exploits that every variable slot carries its own
//! embedding: candidates for an existential variable are ranked densely
//! against the slot vector and judged against the exact grounding oracle,
//! and a whole conjunct can be grounded greedily (arg-max per slot) and
//! checked literal by literal against the graph.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::encoder::{encode_query, score_all_entities, score_all_at_slot};
use crate::error::{Error, Result};
use crate::kg::{EntityId, Kg, SplitGraphs};
use crate::oracle::{answer_set, sample_queries, SampleMode};
use crate::query::{NodeKind, QueryGraph, Tag, NEGATION_TAGS, POSITIVE_TAGS};
use crate::tape::{ModelParams, Tape};

// ---------------------------------------------------------------------------
// Filtered ranking
// ---------------------------------------------------------------------------

/// Filtered, optimistic rank of `answer` under `scores`:
/// `1 + #{e ∉ filter ∪ {answer} : scores[e] > scores[answer]}`.
pub fn filtered_rank(
    scores: &[f64],
    answer: EntityId,
    filter: &BTreeSet<EntityId>,
) -> Result<usize> {
    let sa = *scores
        .get(answer)
        .ok_or_else(|| Error::Metric(format!("answer id {answer} outside score vector")))?;
    let mut rank = 1usize;
    for (e, &s) in scores.iter().enumerate() {
        if !s.is_finite() {
            return Err(Error::Metric(format!("non-finite score for entity {e}")));
        }
        if e != answer && s > sa && !filter.contains(&e) {
            rank += 1;
        }
    }
    Ok(rank)
}

/// Aggregated metrics for one query shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TagMetrics {
    pub mrr: f64,
    pub h1: f64,
    pub h3: f64,
    pub h10: f64,
    /// Number of evaluated queries of this shape.
    pub n: usize,
}

/// Full ranking report across query shapes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankingReport {
    pub per_tag: BTreeMap<String, TagMetrics>,
    /// Mean MRR over the positive query shapes present in the input.
    pub a_p: Option<f64>,
    /// Mean MRR over the negation query shapes present in the input.
    pub a_n: Option<f64>,
    pub n_queries: usize,
    /// Queries skipped for having no hard answers.
    pub n_skipped: usize,
}

/// Per-query metric sample (means over the query's hard answers).
#[derive(Debug, Clone, PartialEq)]
struct QuerySample {
    tag_key: String,
    mrr: f64,
    h1: f64,
    h3: f64,
    h10: f64,
}

fn rank_query(params: &ModelParams, q: &QueryGraph) -> Result<Option<QuerySample>> {
    if q.easy.is_empty() && q.hard.is_empty() {
        return Err(Error::Data(
            "query has no answer labels; label answers before evaluating".into(),
        ));
    }
    if q.hard.is_empty() {
        return Ok(None);
    }
    let mut tape = Tape::new(params);
    let enc = encode_query(&mut tape, q)?;
    let scores = score_all_entities(&tape, &enc)?;
    let filter: BTreeSet<EntityId> = q.easy.union(&q.hard).copied().collect();
    let (mut rr, mut h1, mut h3, mut h10) = (0.0, 0.0, 0.0, 0.0);
    for &a in &q.hard {
        let rank = filtered_rank(&scores, a, &filter)?;
        rr += 1.0 / rank as f64;
        h1 += (rank <= 1) as u8 as f64;
        h3 += (rank <= 3) as u8 as f64;
        h10 += (rank <= 10) as u8 as f64;
    }
    let n = q.hard.len() as f64;
    Ok(Some(QuerySample {
        tag_key: q.tag.map_or_else(|| "custom".to_string(), |t| t.as_str().to_string()),
        mrr: rr / n,
        h1: h1 / n,
        h3: h3 / n,
        h10: h10 / n,
    }))
}

/// Mean computed over value-sorted summands, so the result is bitwise
/// independent of input order.
fn canonical_mean(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn aggregate(samples: &[Option<QuerySample>]) -> RankingReport {
    let mut groups: BTreeMap<String, Vec<&QuerySample>> = BTreeMap::new();
    let mut n_skipped = 0usize;
    for s in samples {
        match s {
            None => n_skipped += 1,
            Some(s) => groups.entry(s.tag_key.clone()).or_default().push(s),
        }
    }
    let per_tag: BTreeMap<String, TagMetrics> = groups
        .into_iter()
        .map(|(k, g)| {
            let col = |f: fn(&QuerySample) -> f64| canonical_mean(g.iter().map(|s| f(s)).collect());
            (
                k,
                TagMetrics {
                    mrr: col(|s| s.mrr),
                    h1: col(|s| s.h1),
                    h3: col(|s| s.h3),
                    h10: col(|s| s.h10),
                    n: g.len(),
                },
            )
        })
        .collect();
    let tag_mean = |tags: &[Tag]| -> Option<f64> {
        let present: Vec<f64> = tags
            .iter()
            .filter_map(|t| per_tag.get(t.as_str()).map(|m| m.mrr))
            .collect();
        (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
    };
    RankingReport {
        a_p: tag_mean(&POSITIVE_TAGS),
        a_n: tag_mean(&NEGATION_TAGS),
        n_queries: samples.len() - n_skipped,
        n_skipped,
        per_tag,
    }
}

/// Evaluates labeled queries with the filtered ranking protocol. Queries
/// without hard answers are skipped (counted); a query with no labels at all
/// is an error. Work is distributed over the current thread pool; results
/// are independent of thread count.
pub fn evaluate(params: &ModelParams, queries: &[QueryGraph]) -> Result<RankingReport> {
    let samples: Vec<Option<QuerySample>> = queries
        .par_iter()
        .map(|q| rank_query(params, q))
        .collect::<Result<_>>()?;
    Ok(aggregate(&samples))
}

// ---------------------------------------------------------------------------
// Interpretability: variable grounding
// ---------------------------------------------------------------------------

/// One highly-ranked candidate grounding.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopCandidate {
    pub entity: EntityId,
    pub score: f64,
    /// Whether the grounding oracle accepts this candidate.
    pub correct: bool,
}

/// Dense grounding diagnosis for one existential variable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarGroundingReport {
    pub var: usize,
    pub disjunct: usize,
    pub slot: usize,
    /// Entities the oracle accepts as groundings of the variable.
    pub n_correct: usize,
    /// Mean reciprocal (unfiltered, optimistic) rank of the correct set
    /// under the slot scores.
    pub mrr: f64,
    /// Expected MRR of uniformly random scores: `H(|V|)/|V|`.
    pub random_mrr: f64,
    pub top: Vec<TopCandidate>,
}

fn harmonic(n: usize) -> f64 {
    (1..=n).map(|k| 1.0 / k as f64).sum()
}

/// Ranks every entity as a grounding of variable `var` (first disjunct
/// containing it) and checks the ranking against the exact oracle on `kg`.
/// `k` bounds the returned top list.
pub fn interpret_variable(
    params: &ModelParams,
    kg: &Kg,
    q: &QueryGraph,
    var: usize,
    k: usize,
) -> Result<VarGroundingReport> {
    let mut tape = Tape::new(params);
    let enc = encode_query(&mut tape, q)?;
    let (di, slot) = enc
        .var_slot(q, var)
        .ok_or_else(|| Error::Structure(format!("query has no variable {var}")))?;
    let scores = score_all_at_slot(&tape, &enc, di, slot)?;

    // Oracle: candidate c is correct iff the conjunct still has answers once
    // the variable is pinned to c.
    let mut correct = BTreeSet::new();
    for c in 0..kg.n_entities() {
        let grounded = QueryGraph {
            tag: None,
            disjuncts: vec![q.disjuncts[di].ground_var(var, c)],
            easy: BTreeSet::new(),
            hard: BTreeSet::new(),
        };
        if !answer_set(kg, &grounded)?.is_empty() {
            correct.insert(c);
        }
    }
    if correct.is_empty() {
        return Err(Error::Data(format!(
            "variable {var} has no valid grounding on this graph"
        )));
    }
    let empty = BTreeSet::new();
    let mut mrr = 0.0;
    for &c in &correct {
        mrr += 1.0 / filtered_rank(&scores, c, &empty)? as f64;
    }
    mrr /= correct.len() as f64;

    let mut order: Vec<EntityId> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let top = order
        .into_iter()
        .take(k)
        .map(|e| TopCandidate {
            entity: e,
            score: scores[e],
            correct: correct.contains(&e),
        })
        .collect();
    Ok(VarGroundingReport {
        var,
        disjunct: di,
        slot,
        n_correct: correct.len(),
        mrr,
        random_mrr: harmonic(kg.n_entities()) / kg.n_entities() as f64,
        top,
    })
}

// ---------------------------------------------------------------------------
// Interpretability: whole-path grounding
// ---------------------------------------------------------------------------

/// One slot of a greedy conjunct grounding.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotAssignment {
    pub slot: usize,
    pub entity: EntityId,
    /// Slot score of the chosen entity; `None` for anchors (fixed).
    pub score: Option<f64>,
}

/// Truth of one literal under a grounding.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LitCheck {
    pub src_slot: usize,
    pub rel: usize,
    pub dst_slot: usize,
    pub negated: bool,
    /// Whether the triple holds in the graph.
    pub holds: bool,
    /// Whether the literal is satisfied (`holds != negated`).
    pub satisfied: bool,
}

/// Greedy grounding of one conjunct: arg-max entity per non-anchor slot,
/// every literal checked against the graph.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConjunctGrounding {
    pub disjunct: usize,
    pub assignment: Vec<SlotAssignment>,
    pub literals: Vec<LitCheck>,
    pub satisfied: bool,
}

/// Grounds every disjunct greedily: each variable and the free node take
/// their arg-max-scoring entity; literals are then verified on `kg`.
pub fn interpret_path(
    params: &ModelParams,
    kg: &Kg,
    q: &QueryGraph,
) -> Result<Vec<ConjunctGrounding>> {
    let mut tape = Tape::new(params);
    let enc = encode_query(&mut tape, q)?;
    let mut out = Vec::new();
    for (di, c) in q.disjuncts.iter().enumerate() {
        let mut assignment = Vec::with_capacity(c.nodes.len());
        for (slot, kind) in c.nodes.iter().enumerate() {
            let sa = match kind {
                NodeKind::Anchor(e) => SlotAssignment {
                    slot,
                    entity: *e,
                    score: None,
                },
                NodeKind::Var(_) | NodeKind::Free => {
                    let scores = score_all_at_slot(&tape, &enc, di, slot)?;
                    let mut best = 0usize;
                    for e in 1..scores.len() {
                        if scores[e] > scores[best] {
                            best = e;
                        }
                    }
                    SlotAssignment {
                        slot,
                        entity: best,
                        score: Some(scores[best]),
                    }
                }
            };
            assignment.push(sa);
        }
        let literals: Vec<LitCheck> = c
            .edges
            .iter()
            .map(|e| {
                let holds =
                    kg.has_triple(assignment[e.src].entity, e.rel, assignment[e.dst].entity);
                LitCheck {
                    src_slot: e.src,
                    rel: e.rel,
                    dst_slot: e.dst,
                    negated: e.negated,
                    holds,
                    satisfied: holds != e.negated,
                }
            })
            .collect();
        let satisfied = literals.iter().all(|l| l.satisfied);
        out.push(ConjunctGrounding {
            disjunct: di,
            assignment,
            literals,
            satisfied,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Complexity-dichotomy benchmark
// ---------------------------------------------------------------------------

/// Timing record for one query shape.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchTagReport {
    pub tag: String,
    pub n_queries: usize,
    /// Median (over repetitions) of the mean per-query oracle time, seconds.
    pub oracle_s: f64,
    /// Same for encode-and-score-all.
    pub encoder_s: f64,
    /// Projection-MLP invocations (I, D, N) summed over the query set.
    pub mlp_calls: (usize, usize, usize),
    /// Closed-form expectation for the same sets.
    pub mlp_expected: (usize, usize, usize),
}

/// Symbolic-vs-neural scaling comparison across path lengths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub tags: Vec<BenchTagReport>,
    /// Oracle time ratio, longest path over single hop. `None` for an
    /// empty run.
    pub oracle_ratio: Option<f64>,
    /// Encoder time ratio, longest path over single hop.
    pub encoder_ratio: Option<f64>,
}

/// Times the exact grounding oracle against the neural encoder on sampled
/// 1-, 2-, and 3-hop queries: grounding cost grows with the explored
/// neighborhood, while the encoder runs a fixed program per extra hop plus
/// one dense score pass. `n` queries per shape; `reps` timing repetitions
/// (median taken). Runs single-threaded.
pub fn bench_dichotomy(
    params: &ModelParams,
    kg: &Kg,
    n: usize,
    reps: usize,
) -> Result<BenchReport> {
    if n == 0 {
        return Ok(BenchReport {
            tags: Vec::new(),
            oracle_ratio: None,
            encoder_ratio: None,
        });
    }
    if reps == 0 {
        return Err(Error::Config("benchmark needs reps ≥ 1".into()));
    }
    if params.n_entities() != kg.n_entities()
        || params.n_forward_relations != kg.n_forward_relations()
    {
        return Err(Error::Data(
            "model and graph disagree on vocabulary sizes".into(),
        ));
    }
    let splits = SplitGraphs::degenerate(kg.clone());
    let median = |mut xs: Vec<f64>| -> f64 {
        xs.sort_by(f64::total_cmp);
        xs[xs.len() / 2]
    };
    let mut tags = Vec::new();
    for tag in [Tag::P1, Tag::P2, Tag::P3] {
        let queries = sample_queries(&splits, tag, n, 0, SampleMode::Partial)?;

        // Invocation accounting on one encoding pass.
        let mut observed = (0, 0, 0);
        let mut expected = (0, 0, 0);
        for q in &queries {
            let mut tape = Tape::new(params);
            let enc = encode_query(&mut tape, q)?;
            let c = tape.mlp_call_counts();
            observed = (observed.0 + c.0, observed.1 + c.1, observed.2 + c.2);
            for d in &enc.disjuncts {
                let e = d.ann.mlp_counts();
                expected = (expected.0 + e.0, expected.1 + e.1, expected.2 + e.2);
            }
        }

        let mut oracle_means = Vec::with_capacity(reps);
        let mut encoder_means = Vec::with_capacity(reps);
        for _ in 0..reps {
            let t0 = Instant::now();
            for q in &queries {
                std::hint::black_box(answer_set(kg, q)?);
            }
            oracle_means.push(t0.elapsed().as_secs_f64() / n as f64);

            let t0 = Instant::now();
            for q in &queries {
                let mut tape = Tape::new(params);
                let enc = encode_query(&mut tape, q)?;
                std::hint::black_box(score_all_entities(&tape, &enc)?);
            }
            encoder_means.push(t0.elapsed().as_secs_f64() / n as f64);
        }
        tags.push(BenchTagReport {
            tag: tag.as_str().to_string(),
            n_queries: n,
            oracle_s: median(oracle_means),
            encoder_s: median(encoder_means),
            mlp_calls: observed,
            mlp_expected: expected,
        });
    }
    let oracle_ratio = Some(tags[2].oracle_s / tags[0].oracle_s);
    let encoder_ratio = Some(tags[2].encoder_s / tags[0].encoder_s);
    Ok(BenchReport {
        tags,
        oracle_ratio,
        encoder_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::Vocab;
    use crate::oracle::label_answers;
    use crate::query::instantiate;

    fn toy_kg() -> Kg {
        let mut ents = Vocab::new();
        for l in ["a", "b", "c", "d", "e", "f"] {
            ents.intern(l);
        }
        let mut rels = Vocab::new();
        rels.intern("r0");
        rels.intern("r1");
        let triples = vec![
            (0, 0, 1), // a r0 b
            (0, 0, 3), // a r0 d
            (1, 1, 2), // b r1 c
            (3, 1, 4), // d r1 e
            (5, 0, 2), // f r0 c
        ];
        Kg::from_triples(ents, rels, triples).unwrap()
    }

    fn toy_params(kg: &Kg, d: usize, seed: u64) -> ModelParams {
        ModelParams::init(d, kg.n_entities(), kg.n_forward_relations(), false, 0.01, seed)
            .unwrap()
    }

    #[test]
    fn filtered_rank_hand_cases() {
        let scores = [0.9, 0.5, 0.8, 0.3];
        let empty = BTreeSet::new();
        assert_eq!(filtered_rank(&scores, 1, &empty).unwrap(), 3);
        assert_eq!(filtered_rank(&scores, 0, &empty).unwrap(), 1);
        let f: BTreeSet<usize> = [0].into_iter().collect();
        assert_eq!(filtered_rank(&scores, 1, &f).unwrap(), 2);
        let f: BTreeSet<usize> = [0, 2].into_iter().collect();
        assert_eq!(filtered_rank(&scores, 1, &f).unwrap(), 1);
        // Optimistic ties: equal scores never count against the answer.
        assert_eq!(filtered_rank(&[1.0, 1.0, 1.0], 2, &empty).unwrap(), 1);
        assert!(filtered_rank(&[f64::NAN, 0.0], 1, &empty).is_err());
        assert!(filtered_rank(&[0.0], 5, &empty).is_err());
    }

    #[test]
    fn aggregation_matches_hand_computed_means() {
        // Ranks 2 and 4 on two single-answer queries: MRR = (1/2 + 1/4)/2.
        let s = |tag: &str, rank: usize| {
            Some(QuerySample {
                tag_key: tag.into(),
                mrr: 1.0 / rank as f64,
                h1: (rank <= 1) as u8 as f64,
                h3: (rank <= 3) as u8 as f64,
                h10: (rank <= 10) as u8 as f64,
            })
        };
        let report = aggregate(&[s("1p", 2), s("1p", 4), None]);
        let m = &report.per_tag["1p"];
        assert_eq!(m.mrr, 0.375);
        assert_eq!(m.h1, 0.0);
        assert_eq!(m.h3, 0.5);
        assert_eq!(m.h10, 1.0);
        assert_eq!(m.n, 2);
        assert_eq!(report.n_queries, 2);
        assert_eq!(report.n_skipped, 1);
        assert_eq!(report.a_p, Some(0.375), "only 1p present");
        assert_eq!(report.a_n, None, "no negation shapes present");

        // a_p averages over the tags present, not over all nine.
        let report = aggregate(&[s("1p", 1), s("2in", 2)]);
        assert_eq!(report.a_p, Some(1.0));
        assert_eq!(report.a_n, Some(0.5));
    }

    /// With oracle-membership scores every hard answer ranks first: the
    /// protocol filters the other answers out of the comparison.
    #[test]
    fn oracle_scores_achieve_perfect_mrr() {
        let kg = toy_kg();
        let splits = SplitGraphs::degenerate(kg.clone());
        let mut q = instantiate(Tag::P1, &[0], &[0]).unwrap();
        label_answers(&splits, &mut q).unwrap();
        assert!(!q.easy.is_empty() || !q.hard.is_empty());
        // Degenerate splits put everything in easy; move labels to hard to
        // exercise ranking.
        q.hard = std::mem::take(&mut q.easy);
        let full = answer_set(&kg, &q).unwrap();
        let scores: Vec<f64> = (0..kg.n_entities())
            .map(|e| if full.contains(&e) { 1.0 } else { 0.0 })
            .collect();
        let filter: BTreeSet<EntityId> = q.easy.union(&q.hard).copied().collect();
        for &a in &q.hard {
            assert_eq!(filtered_rank(&scores, a, &filter).unwrap(), 1);
        }
    }

    #[test]
    fn evaluate_reports_tags_and_skips() {
        let kg = toy_kg();
        let p = toy_params(&kg, 3, 7);
        let mut q1 = instantiate(Tag::P1, &[0], &[0]).unwrap();
        q1.hard.insert(1);
        q1.hard.insert(3);
        let mut q2 = instantiate(Tag::P2, &[0], &[0, 1]).unwrap();
        q2.hard.insert(2);
        q2.easy.insert(4);
        let mut skipped = instantiate(Tag::P1, &[5], &[0]).unwrap();
        skipped.easy.insert(2); // easy-only: skipped, not an error
        let report = evaluate(&p, &[q1, q2, skipped]).unwrap();
        assert_eq!(report.n_queries, 2);
        assert_eq!(report.n_skipped, 1);
        assert_eq!(report.per_tag.len(), 2);
        assert_eq!(report.per_tag["1p"].n, 1);
        assert_eq!(report.per_tag["2p"].n, 1);
        assert!(report.a_p.is_some());
        assert!(report.a_n.is_none());
        for m in report.per_tag.values() {
            assert!(m.mrr > 0.0 && m.mrr <= 1.0);
            assert!(m.h10 >= m.h3 && m.h3 >= m.h1);
        }

        // Unlabeled query: hard error.
        let bare = instantiate(Tag::P1, &[0], &[0]).unwrap();
        assert!(matches!(evaluate(&p, &[bare]), Err(Error::Data(_))));
    }

    #[test]
    fn variable_grounding_reports_oracle_correct_set() {
        let kg = toy_kg();
        let p = toy_params(&kg, 4, 3);
        // a --r0--> V --r1--> F: valid groundings of V are exactly b and d
        // (the r0-successors of a that have an r1 edge onward).
        let mut q = instantiate(Tag::P2, &[0], &[0, 1]).unwrap();
        q.hard.insert(2);
        q.hard.insert(4);
        let rep = interpret_variable(&p, &kg, &q, 0, 3).unwrap();
        assert_eq!(rep.n_correct, 2);
        assert_eq!((rep.var, rep.disjunct, rep.slot), (0, 0, 1));
        assert!(rep.mrr > 0.0 && rep.mrr <= 1.0);
        let h6 = 1.0 + 0.5 + 1.0 / 3.0 + 0.25 + 0.2 + 1.0 / 6.0;
        assert!((rep.random_mrr - h6 / 6.0).abs() < 1e-12);
        assert_eq!(rep.top.len(), 3);
        // Top list is sorted by score descending.
        assert!(rep.top[0].score >= rep.top[1].score);

        assert!(interpret_variable(&p, &kg, &q, 9, 3).is_err(), "unknown var");
    }

    #[test]
    fn path_grounding_checks_literals_against_graph() {
        let kg = toy_kg();
        let p = toy_params(&kg, 4, 5);
        let mut q = instantiate(Tag::P2, &[0], &[0, 1]).unwrap();
        q.hard.insert(2);
        let gs = interpret_path(&p, &kg, &q).unwrap();
        assert_eq!(gs.len(), 1);
        let g = &gs[0];
        assert_eq!(g.assignment.len(), 3);
        assert_eq!(g.assignment[0].entity, 0, "anchor fixed");
        assert!(g.assignment[0].score.is_none());
        assert!(g.assignment[1].score.is_some());
        assert_eq!(g.literals.len(), 2);
        for l in &g.literals {
            let want = kg.has_triple(
                g.assignment[l.src_slot].entity,
                l.rel,
                g.assignment[l.dst_slot].entity,
            );
            assert_eq!(l.holds, want);
            assert_eq!(l.satisfied, l.holds != l.negated);
        }
        assert_eq!(g.satisfied, g.literals.iter().all(|l| l.satisfied));
    }

    #[test]
    fn bench_produces_consistent_counts_and_timings() {
        // A denser random-ish graph so 2p/3p sampling succeeds.
        let mut ents = Vocab::new();
        for i in 0..40 {
            ents.intern(&format!("e{i}"));
        }
        let mut rels = Vocab::new();
        rels.intern("r0");
        rels.intern("r1");
        let mut triples = Vec::new();
        for h in 0..40usize {
            for j in 1..=3usize {
                triples.push((h, j % 2, (h * 7 + j * 11) % 40));
            }
        }
        let kg = Kg::from_triples(ents, rels, triples).unwrap();
        let p = toy_params(&kg, 2, 1);
        let rep = bench_dichotomy(&p, &kg, 4, 2).unwrap();
        assert_eq!(rep.tags.len(), 3);
        for (i, t) in rep.tags.iter().enumerate() {
            assert_eq!(t.tag, ["1p", "2p", "3p"][i]);
            assert!(t.oracle_s > 0.0 && t.encoder_s > 0.0);
            assert_eq!(t.mlp_calls, t.mlp_expected, "{}", t.tag);
        }
        assert_eq!(rep.tags[0].mlp_expected, (0, 0, 0));
        assert_eq!(rep.tags[1].mlp_expected, (4, 4, 0), "4 queries × (1,1,0)");
        assert_eq!(rep.tags[2].mlp_expected, (8, 8, 0));
        assert!(rep.oracle_ratio.unwrap().is_finite());
        assert!(rep.encoder_ratio.unwrap().is_finite());

        // Vacuous run: empty table, no error.
        let empty = bench_dichotomy(&p, &kg, 0, 5).unwrap();
        assert!(empty.tags.is_empty());
        assert_eq!(empty.oracle_ratio, None);

        let wrong = ModelParams::init(2, 5, 2, false, 0.01, 1).unwrap();
        assert!(bench_dichotomy(&wrong, &kg, 2, 1).is_err(), "vocab mismatch");
    }

    /// Reference implementation: sort-based filtered rank on random scores.
    #[test]
    fn filtered_rank_matches_brute_force_on_random_scores() {
        use rand::Rng;
        let mut rng = crate::rng::seeded_rng(11, 99);
        for case in 0..50 {
            let n = rng.gen_range(2..=100);
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let answer = rng.gen_range(0..n);
            let mut filter = BTreeSet::new();
            for e in 0..n {
                if rng.gen_range(0..4) == 0 {
                    filter.insert(e);
                }
            }
            // Brute force: competitors sorted descending; rank = position of
            // the first slot whose score is not greater than the answer's.
            let mut comp: Vec<f64> = (0..n)
                .filter(|e| *e != answer && !filter.contains(e))
                .map(|e| scores[e])
                .collect();
            comp.sort_by(|a, b| b.total_cmp(a));
            let want = 1 + comp.iter().take_while(|&&s| s > scores[answer]).count();
            assert_eq!(
                filtered_rank(&scores, answer, &filter).unwrap(),
                want,
                "case {case}"
            );
        }
    }

    #[test]
    fn aggregates_are_invariant_to_query_order() {
        let kg = toy_kg();
        let p = toy_params(&kg, 3, 2);
        let mut queries = Vec::new();
        for (a, r) in [(0usize, 0usize), (1, 1), (3, 1), (5, 0)] {
            let mut q = instantiate(Tag::P1, &[a], &[r]).unwrap();
            q.hard = answer_set(&kg, &q).unwrap();
            queries.push(q);
        }
        let fwd = evaluate(&p, &queries).unwrap();
        queries.reverse();
        let rev = evaluate(&p, &queries).unwrap();
        assert_eq!(fwd, rev, "bitwise-equal aggregates under reordering");
    }
}
