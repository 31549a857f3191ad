//! Query encoder: turns an EFO₁ query graph into a tape program whose final
//! vectors score every entity at once.
//!
//! Each conjunct is annotated ([`crate::query::classify`]) and walked in
//! topological order. Literals `r(u, ·)` become `bind(φ(u), φ(r))`; negated
//! literals pass through the negation MLP together with a context bundle of
//! the node's positive literals; variable nodes are projected by the
//! independent- or dependent-node MLP; the free node is a flat bundle of its
//! literal vectors. A disjunctive query keeps one encoding per conjunct and
//! scores entities by the maximum over them.
//!
//! The returned traces expose every intermediate tape node (per-slot
//! embeddings, raw and transformed literal vectors, negation contexts) so the
//! trainer can attach auxiliary losses and the interpretability tools can
//! rank candidate groundings for any variable.

use crate::error::{Error, Result};
use crate::kg::{EntityId, RelationId};
use crate::query::{classify, validate_structure, Annotated, Conjunct, QueryGraph, Role};
use crate::tape::{Cands, MlpSel, NodeId, Op, Tape};
use crate::vsa;

pub use crate::tape::ModelParams;

/// One application of the negation MLP: `out = MLP_N(ctx ⊕ raw)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NegApp {
    /// Bundle of the owning node's positive literal vectors (zeros if none).
    pub ctx: NodeId,
    /// The untransformed literal vector.
    pub raw: NodeId,
    pub out: NodeId,
}

/// One literal as encoded at its destination node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LitView {
    /// Annotated slot index of the literal's source node.
    pub src_slot: usize,
    pub rel: RelationId,
    pub negated: bool,
    /// `bind(φ(src), φ(rel))` on the tape.
    pub raw: NodeId,
    /// `raw`, or the negation-MLP output when the literal is negated.
    pub used: NodeId,
}

/// Encoding trace of one annotated slot (base node or auxiliary node).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotTrace {
    /// The slot's embedding on the tape.
    pub emb: NodeId,
    /// Literals consumed by this slot (empty for anchors and independents).
    pub lits: Vec<LitView>,
    /// Context bundle, present only when the slot has negated literals.
    pub ctx: Option<NodeId>,
}

/// Full encoding trace of one conjunct.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjunctTrace {
    pub ann: Annotated,
    /// Indexed like `ann.roles`: base slots first, then auxiliaries.
    pub slots: Vec<SlotTrace>,
    pub free_slot: usize,
    /// The conjunct encoding: the free slot's embedding node.
    pub root: NodeId,
    /// Every negation-MLP application, in encoding order.
    pub neg_apps: Vec<NegApp>,
}

/// Encoding of a whole query: one trace per disjunct.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedQuery {
    pub disjuncts: Vec<ConjunctTrace>,
}

impl EncodedQuery {
    /// Tape nodes holding the per-disjunct encodings.
    pub fn roots(&self) -> Vec<NodeId> {
        self.disjuncts.iter().map(|c| c.root).collect()
    }

    pub fn neg_apps(&self) -> impl Iterator<Item = &NegApp> {
        self.disjuncts.iter().flat_map(|c| c.neg_apps.iter())
    }

    /// Trace of the first disjunct containing existential variable `var`,
    /// with the matching slot index (used to rank candidate groundings).
    pub fn var_slot(&self, q: &QueryGraph, var: usize) -> Option<(usize, usize)> {
        for (di, c) in q.disjuncts.iter().enumerate() {
            if let Some(slot) = c.var_index(var) {
                return Some((di, slot));
            }
        }
        None
    }
}

/// Encodes one conjunct onto the tape. The conjunct must be acyclic with
/// exactly one free node; full-query validation lives in [`encode_query`].
pub fn encode_conjunct(tape: &mut Tape<'_>, c: &Conjunct) -> Result<ConjunctTrace> {
    let s = tape.params().s();
    let n_fwd = tape.params().n_forward_relations;
    let ann = classify(c, n_fwd)?;
    let n_slots = ann.roles.len();
    let mut embs: Vec<Option<NodeId>> = vec![None; n_slots];
    let mut slots: Vec<Option<SlotTrace>> = vec![None; n_slots];
    let mut neg_apps = Vec::new();
    let mut free_slot = None;

    // Literal vectors of one slot: raw binds first, then the context bundle
    // (only if some literal is negated), then the negation-MLP passes.
    let encode_lits = |tape: &mut Tape<'_>,
                           embs: &mut Vec<Option<NodeId>>,
                           slots: &mut Vec<Option<SlotTrace>>,
                           neg_apps: &mut Vec<NegApp>,
                           lits: &[crate::query::Lit]|
     -> Result<(Vec<LitView>, Option<NodeId>)> {
        // Auxiliary sources are independent nodes; embed them on first use.
        for l in lits {
            if embs[l.src].is_none() {
                let Role::Independent { rel } = ann.roles[l.src] else {
                    return Err(Error::Structure(format!(
                        "literal source {} encoded out of order",
                        l.src
                    )));
                };
                let r = tape.push(Op::Relation(rel))?;
                let emb = tape.push(Op::Mlp { sel: MlpSel::I, x: r })?;
                embs[l.src] = Some(emb);
                slots[l.src] = Some(SlotTrace {
                    emb,
                    lits: Vec::new(),
                    ctx: None,
                });
            }
        }
        let mut raws = Vec::with_capacity(lits.len());
        for l in lits {
            let r = tape.push(Op::Relation(l.rel))?;
            let src = embs[l.src].expect("source embedded");
            raws.push(tape.push(Op::Bind { a: src, b: r })?);
        }
        let mut ctx = None;
        if lits.iter().any(|l| l.negated) {
            let pos: Vec<NodeId> = lits
                .iter()
                .zip(&raws)
                .filter(|(l, _)| !l.negated)
                .map(|(_, &raw)| raw)
                .collect();
            ctx = Some(if pos.is_empty() {
                tape.push(Op::Zeros(s))?
            } else {
                tape.push(Op::NormAdd(pos))?
            });
        }
        let mut views = Vec::with_capacity(lits.len());
        for (l, &raw) in lits.iter().zip(&raws) {
            let used = if l.negated {
                let ctx = ctx.expect("context exists for negated literals");
                let cat = tape.push(Op::Concat(vec![ctx, raw]))?;
                let out = tape.push(Op::Mlp { sel: MlpSel::N, x: cat })?;
                neg_apps.push(NegApp { ctx, raw, out });
                out
            } else {
                raw
            };
            views.push(LitView {
                src_slot: l.src,
                rel: l.rel,
                negated: l.negated,
                raw,
                used,
            });
        }
        Ok((views, ctx))
    };

    // Bundle helper: flat norm_add of the slots' used vectors, zeros if none.
    let bundle = |tape: &mut Tape<'_>, views: &[LitView]| -> Result<NodeId> {
        if views.is_empty() {
            tape.push(Op::Zeros(s))
        } else {
            tape.push(Op::NormAdd(views.iter().map(|v| v.used).collect()))
        }
    };

    for &idx in &ann.order {
        let (emb, trace) = match &ann.roles[idx] {
            Role::Anchor(e) => {
                let emb = tape.push(Op::Entity(*e))?;
                (emb, SlotTrace { emb, lits: Vec::new(), ctx: None })
            }
            Role::Independent { rel } => {
                let r = tape.push(Op::Relation(*rel))?;
                let emb = tape.push(Op::Mlp { sel: MlpSel::I, x: r })?;
                (emb, SlotTrace { emb, lits: Vec::new(), ctx: None })
            }
            Role::Dependent { fwd, bwd } => {
                let (fv, fctx) =
                    encode_lits(tape, &mut embs, &mut slots, &mut neg_apps, fwd)?;
                let (bv, bctx) =
                    encode_lits(tape, &mut embs, &mut slots, &mut neg_apps, bwd)?;
                let f_bundle = bundle(tape, &fv)?;
                let b_bundle = bundle(tape, &bv)?;
                let cat = tape.push(Op::Concat(vec![f_bundle, b_bundle]))?;
                let emb = tape.push(Op::Mlp { sel: MlpSel::D, x: cat })?;
                let mut lits = fv;
                lits.extend(bv);
                (emb, SlotTrace { emb, lits, ctx: fctx.or(bctx) })
            }
            Role::Free { lits } => {
                if lits.is_empty() {
                    return Err(Error::Structure(
                        "free node has no incoming literals".into(),
                    ));
                }
                free_slot = Some(idx);
                let (views, ctx) =
                    encode_lits(tape, &mut embs, &mut slots, &mut neg_apps, lits)?;
                let emb = bundle(tape, &views)?;
                (emb, SlotTrace { emb, lits: views, ctx })
            }
        };
        embs[idx] = Some(emb);
        slots[idx] = Some(trace);
    }

    let free_slot =
        free_slot.ok_or_else(|| Error::Structure("conjunct has no free node".into()))?;
    let root = embs[free_slot].expect("free node encoded");
    // A dependent node whose outgoing edges were all consumed leaves no
    // unencoded auxiliary; anything still empty indicates a bug upstream.
    let slots: Vec<SlotTrace> = slots
        .into_iter()
        .enumerate()
        .map(|(i, s)| s.ok_or_else(|| Error::Structure(format!("slot {i} never encoded"))))
        .collect::<Result<_>>()?;
    Ok(ConjunctTrace {
        ann,
        slots,
        free_slot,
        root,
        neg_apps,
    })
}

/// Validates and encodes a full query; one trace per disjunct.
pub fn encode_query(tape: &mut Tape<'_>, q: &QueryGraph) -> Result<EncodedQuery> {
    validate_structure(q)?;
    let disjuncts = q
        .disjuncts
        .iter()
        .map(|c| encode_conjunct(tape, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(EncodedQuery { disjuncts })
}

/// Pushes the scalar score of `target` under the encoded query:
/// `max_j ⟨root_j, φ(target)⟩`.
pub fn push_target_score(
    tape: &mut Tape<'_>,
    enc: &EncodedQuery,
    target: EntityId,
) -> Result<NodeId> {
    tape.push(Op::MaxDot {
        qs: enc.roots(),
        target,
    })
}

/// Pushes `ln Σ_{e∈cands} exp(score(e))` for the encoded query.
pub fn push_lse_score(tape: &mut Tape<'_>, enc: &EncodedQuery, cands: Cands) -> Result<NodeId> {
    tape.push(Op::LseMaxDot {
        qs: enc.roots(),
        cands,
    })
}

/// Forward-only scores of every entity: the per-disjunct dense score pass,
/// reduced by elementwise max.
pub fn score_all_entities(tape: &Tape<'_>, enc: &EncodedQuery) -> Result<Vec<f64>> {
    let p = tape.params();
    let mut best: Option<Vec<f64>> = None;
    for c in &enc.disjuncts {
        let scores = vsa::score_all(&p.entities, tape.value(c.root))?;
        best = Some(match best {
            None => scores,
            Some(mut acc) => {
                for (a, s) in acc.iter_mut().zip(&scores) {
                    if *s > *a {
                        *a = *s;
                    }
                }
                acc
            }
        });
    }
    best.ok_or_else(|| Error::Structure("query has no disjuncts".into()))
}

/// Scores every entity at an *internal* slot of one disjunct (used to rank
/// candidate groundings of an existential variable).
pub fn score_all_at_slot(
    tape: &Tape<'_>,
    enc: &EncodedQuery,
    disjunct: usize,
    slot: usize,
) -> Result<Vec<f64>> {
    let c = enc
        .disjuncts
        .get(disjunct)
        .ok_or_else(|| Error::Structure(format!("no disjunct {disjunct}")))?;
    let t = c
        .slots
        .get(slot)
        .ok_or_else(|| Error::Structure(format!("no slot {slot}")))?;
    vsa::score_all(&tape.params().entities, tape.value(t.emb))
}

/// Ranks every entity as a grounding of existential variable `var` (first
/// disjunct containing it): top `k` by slot score, descending, ties broken
/// by ascending entity id.
pub fn ground_variable(
    params: &ModelParams,
    q: &QueryGraph,
    var: usize,
    k: usize,
) -> Result<Vec<(EntityId, f64)>> {
    let mut tape = Tape::new(params);
    let enc = encode_query(&mut tape, q)?;
    let (di, slot) = enc
        .var_slot(q, var)
        .ok_or_else(|| Error::Structure(format!("query has no variable {var}")))?;
    let scores = score_all_at_slot(&tape, &enc, di, slot)?;
    let mut order: Vec<EntityId> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    Ok(order.into_iter().map(|e| (e, scores[e])).collect())
}

// ---------------------------------------------------------------------------
// Serializable trace view
// ---------------------------------------------------------------------------

/// One literal in the serializable trace.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct LitTraceView {
    pub src_slot: usize,
    pub rel: String,
    pub negated: bool,
    /// `bind(φ(src), φ(rel))`.
    pub raw: Vec<f64>,
    /// Vector actually bundled (negation-MLP output for negated literals).
    pub used: Vec<f64>,
}

/// One annotated slot in the serializable trace.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SlotTraceView {
    pub slot: usize,
    /// `anchor <label>` / `var <id>` / `free` / `aux`.
    pub kind: String,
    /// `anchor` / `independent(<rel>)` / `dependent` / `free`.
    pub role: String,
    pub lits: Vec<LitTraceView>,
    /// Context bundle fed to the negation MLP, when present.
    pub ctx: Option<Vec<f64>>,
    pub embedding: Vec<f64>,
}

/// Serializable encoding trace of one conjunct: every slot exactly once, in
/// encoding (topological) order.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ConjunctTraceView {
    pub disjunct: usize,
    pub order: Vec<usize>,
    pub slots: Vec<SlotTraceView>,
    pub free_slot: usize,
    /// The conjunct encoding φ(c): the free slot's embedding.
    pub root: Vec<f64>,
}

/// Serializable encoding trace of a whole query.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EncodeTrace {
    pub disjuncts: Vec<ConjunctTraceView>,
}

fn rel_name(labels: &[String], n_forward: usize, r: RelationId) -> String {
    if r < n_forward {
        labels.get(r).cloned().unwrap_or_else(|| format!("r{r}"))
    } else {
        let base = r - n_forward;
        let l = labels.get(base).cloned().unwrap_or_else(|| format!("r{base}"));
        format!("{l}⁻¹")
    }
}

/// Encodes `q` and renders the full trace with labels and vector values —
/// every slot appears exactly once, in topological encoding order.
/// `entity_labels`/`relation_labels` come from the graph or a checkpoint
/// (forward relations only; inverses are suffixed automatically).
pub fn encode_trace(
    params: &ModelParams,
    q: &QueryGraph,
    entity_labels: &[String],
    relation_labels: &[String],
) -> Result<EncodeTrace> {
    use crate::query::NodeKind;
    let n_fwd = params.n_forward_relations;
    let mut tape = Tape::new(params);
    let enc = encode_query(&mut tape, q)?;
    let mut disjuncts = Vec::with_capacity(enc.disjuncts.len());
    for (di, (c, t)) in q.disjuncts.iter().zip(&enc.disjuncts).enumerate() {
        // Full walk order: `ann.order` covers base nodes; each dependent's
        // auxiliary sources are embedded just before it.
        let mut walk = Vec::with_capacity(t.ann.roles.len());
        for &idx in &t.ann.order {
            if let crate::query::Role::Dependent { bwd, .. } = &t.ann.roles[idx] {
                for l in bwd {
                    if l.src >= t.ann.n_base {
                        walk.push(l.src);
                    }
                }
            }
            walk.push(idx);
        }
        let mut slots = Vec::with_capacity(walk.len());
        for &slot in &walk {
            let kind = if slot < t.ann.n_base {
                match c.nodes[slot] {
                    NodeKind::Anchor(e) => format!(
                        "anchor {}",
                        entity_labels.get(e).cloned().unwrap_or_else(|| format!("e{e}"))
                    ),
                    NodeKind::Var(v) => format!("var {v}"),
                    NodeKind::Free => "free".to_string(),
                }
            } else {
                "aux".to_string()
            };
            let role = match &t.ann.roles[slot] {
                crate::query::Role::Anchor(_) => "anchor".to_string(),
                crate::query::Role::Independent { rel } => {
                    format!("independent({})", rel_name(relation_labels, n_fwd, *rel))
                }
                crate::query::Role::Dependent { .. } => "dependent".to_string(),
                crate::query::Role::Free { .. } => "free".to_string(),
            };
            let st = &t.slots[slot];
            let lits = st
                .lits
                .iter()
                .map(|l| LitTraceView {
                    src_slot: l.src_slot,
                    rel: rel_name(relation_labels, n_fwd, l.rel),
                    negated: l.negated,
                    raw: tape.value(l.raw).to_vec(),
                    used: tape.value(l.used).to_vec(),
                })
                .collect();
            slots.push(SlotTraceView {
                slot,
                kind,
                role,
                lits,
                ctx: st.ctx.map(|c| tape.value(c).to_vec()),
                embedding: tape.value(st.emb).to_vec(),
            });
        }
        disjuncts.push(ConjunctTraceView {
            disjunct: di,
            order: walk,
            slots,
            free_slot: t.free_slot,
            root: tape.value(t.root).to_vec(),
        });
    }
    Ok(EncodeTrace { disjuncts })
}
