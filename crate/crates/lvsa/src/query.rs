//! EFO₁ query graphs.
//!
//! A query is a disjunction of conjunctive graphs. Each conjunct has anchor
//! nodes (constants), existentially quantified variables, and exactly one
//! free node — the answer slot. Edges are literals `r(src, dst)`, optionally
//! negated. Structural rules: the free node never appears as a source, and
//! anchors never appear as destinations, so information flows from constants
//! toward the free node and each conjunct's dependency graph is a DAG.
//!
//! The module owns:
//! - the JSONL wire format (one query object per line, canonical field
//!   order, entities/relations referenced by label);
//! - the 14 benchmark templates (`1p … pni`) and their instantiation;
//! - [`toposort`] — Kahn's algorithm with ties broken by ascending node
//!   index, the order the encoder and the oracle both walk;
//! - [`classify`] — node-role annotation (anchor / independent / dependent /
//!   free) including the backward-edge rewrite that introduces auxiliary
//!   independent nodes for a dependent variable's outgoing edges.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{EntityId, Kg, RelationId};

// ---------------------------------------------------------------------------
// Tags
// ---------------------------------------------------------------------------

/// The 14 benchmark query shapes. The first nine are positive-only; the last
/// five contain one negated literal each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    P1,
    P2,
    P3,
    I2,
    I3,
    Pi,
    Ip,
    U2,
    Up,
    In2,
    In3,
    Inp,
    Pin,
    Pni,
}

/// All tags, in the conventional reporting order.
pub const ALL_TAGS: [Tag; 14] = [
    Tag::P1,
    Tag::P2,
    Tag::P3,
    Tag::I2,
    Tag::I3,
    Tag::Pi,
    Tag::Ip,
    Tag::U2,
    Tag::Up,
    Tag::In2,
    Tag::In3,
    Tag::Inp,
    Tag::Pin,
    Tag::Pni,
];

/// The nine positive-only tags (averaged into `A_p`).
pub const POSITIVE_TAGS: [Tag; 9] = [
    Tag::P1,
    Tag::P2,
    Tag::P3,
    Tag::I2,
    Tag::I3,
    Tag::Pi,
    Tag::Ip,
    Tag::U2,
    Tag::Up,
];

/// The five negation tags (averaged into `A_n`).
pub const NEGATION_TAGS: [Tag; 5] = [Tag::In2, Tag::In3, Tag::Inp, Tag::Pin, Tag::Pni];

impl Tag {
    pub fn as_str(&self) -> &'static str {
        match self {
            Tag::P1 => "1p",
            Tag::P2 => "2p",
            Tag::P3 => "3p",
            Tag::I2 => "2i",
            Tag::I3 => "3i",
            Tag::Pi => "pi",
            Tag::Ip => "ip",
            Tag::U2 => "2u",
            Tag::Up => "up",
            Tag::In2 => "2in",
            Tag::In3 => "3in",
            Tag::Inp => "inp",
            Tag::Pin => "pin",
            Tag::Pni => "pni",
        }
    }

    pub fn from_str(s: &str) -> Result<Tag> {
        ALL_TAGS
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Data(format!("unknown query tag {s:?}")))
    }

    pub fn is_negation(&self) -> bool {
        NEGATION_TAGS.contains(self)
    }
}

impl std::fmt::Display for Tag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

// ---------------------------------------------------------------------------
// Graph types
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Anchor(EntityId),
    /// Existential variable; ids are dense and 0-based within a query.
    Var(usize),
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub src: usize,
    pub rel: RelationId,
    pub dst: usize,
    pub negated: bool,
}

/// One conjunctive graph: nodes indexed densely, edges as literals.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Conjunct {
    pub nodes: Vec<NodeKind>,
    pub edges: Vec<Edge>,
}

impl Conjunct {
    /// Index of the (single) free node.
    pub fn free_index(&self) -> usize {
        self.nodes
            .iter()
            .position(|n| matches!(n, NodeKind::Free))
            .expect("validated conjunct has a free node")
    }

    /// Node index of variable `var`, if it occurs in this conjunct.
    pub fn var_index(&self, var: usize) -> Option<usize> {
        self.nodes.iter().position(|n| matches!(n, NodeKind::Var(v) if *v == var))
    }

    /// A copy with variable `var` grounded to `entity` (the node becomes an
    /// anchor). Used by interpretability probes; the result intentionally
    /// violates the "anchors have no incoming edges" parse rule, which the
    /// oracle handles as a membership constraint.
    pub fn ground_var(&self, var: usize, entity: EntityId) -> Conjunct {
        let mut c = self.clone();
        for n in &mut c.nodes {
            if matches!(n, NodeKind::Var(v) if *v == var) {
                *n = NodeKind::Anchor(entity);
            }
        }
        c
    }
}

/// A full EFO₁ query in disjunctive normal form, with its answer labels.
/// `easy` answers are reachable on the train+valid graph; `hard` answers
/// require the full graph (and are the ones evaluation ranks).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QueryGraph {
    pub tag: Option<Tag>,
    pub disjuncts: Vec<Conjunct>,
    pub easy: BTreeSet<EntityId>,
    pub hard: BTreeSet<EntityId>,
}

impl QueryGraph {
    /// Distinct variable ids across all disjuncts, ascending.
    pub fn var_ids(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for c in &self.disjuncts {
            for n in &c.nodes {
                if let NodeKind::Var(v) = n {
                    out.insert(*v);
                }
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// Structural validation of a query graph. Covers: node-index bounds, exactly
/// one free node per conjunct, free-never-source / anchor-never-destination,
/// no isolated nodes, dense variable ids, and acyclicity of every conjunct.
pub fn validate_structure(q: &QueryGraph) -> Result<()> {
    if q.disjuncts.is_empty() {
        return Err(Error::Structure("query has no disjuncts".into()));
    }
    let mut var_ids = BTreeSet::new();
    for (ci, c) in q.disjuncts.iter().enumerate() {
        let n = c.nodes.len();
        let frees = c.nodes.iter().filter(|k| matches!(k, NodeKind::Free)).count();
        if frees != 1 {
            return Err(Error::Arity(format!(
                "disjunct {ci}: expected exactly one free node, found {frees}"
            )));
        }
        let mut touched = vec![false; n];
        for (ei, e) in c.edges.iter().enumerate() {
            if e.src >= n || e.dst >= n {
                return Err(Error::Structure(format!(
                    "disjunct {ci} edge {ei}: node index out of range ({} nodes)",
                    n
                )));
            }
            if matches!(c.nodes[e.src], NodeKind::Free) {
                return Err(Error::Structure(format!(
                    "disjunct {ci} edge {ei}: the free variable cannot be a source"
                )));
            }
            if matches!(c.nodes[e.dst], NodeKind::Anchor(_)) {
                return Err(Error::Structure(format!(
                    "disjunct {ci} edge {ei}: an anchor cannot be a destination"
                )));
            }
            touched[e.src] = true;
            touched[e.dst] = true;
        }
        if let Some(idx) = touched.iter().position(|t| !t) {
            return Err(Error::Structure(format!(
                "disjunct {ci}: node {idx} has no incident edges"
            )));
        }
        for k in &c.nodes {
            if let NodeKind::Var(v) = k {
                var_ids.insert(*v);
            }
        }
        toposort(c)?; // acyclicity
    }
    for (expect, got) in var_ids.iter().enumerate() {
        if expect != *got {
            return Err(Error::Structure(format!(
                "variable ids must be dense 0-based; missing id {expect}"
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Topological order
// ---------------------------------------------------------------------------

/// Kahn's algorithm over a conjunct's edges (negated literals order their
/// endpoints too — the destination's encoding consumes the source's either
/// way). Ties among ready nodes break by ascending node index, so the order
/// is a deterministic function of the graph alone.
pub fn toposort(c: &Conjunct) -> Result<Vec<usize>> {
    let n = c.nodes.len();
    let mut indeg = vec![0usize; n];
    for e in &c.edges {
        indeg[e.dst] += 1;
    }
    let mut done = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        let next = (0..n).find(|&i| !done[i] && indeg[i] == 0).ok_or_else(|| {
            Error::Cycle("conjunct has a cyclic variable dependency".into())
        })?;
        done[next] = true;
        order.push(next);
        for e in &c.edges {
            if e.src == next {
                indeg[e.dst] -= 1;
            }
        }
    }
    Ok(order)
}

// ---------------------------------------------------------------------------
// Role classification
// ---------------------------------------------------------------------------

/// One literal as seen from its destination node: `rel(src, ·)`, possibly
/// negated. For backward slots, `src` points at an auxiliary node and `rel`
/// is already inverted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lit {
    pub src: usize,
    pub rel: RelationId,
    pub negated: bool,
}

/// Encoding role of one annotated node.
#[derive(Debug, Clone, PartialEq)]
pub enum Role {
    Anchor(EntityId),
    /// A variable whose only incident edge leaves it (or an auxiliary node
    /// introduced by the backward rewrite): embedded from the relation alone.
    Independent { rel: RelationId },
    /// A variable embedded from its incoming literals (`fwd`) and its
    /// inverted outgoing literals (`bwd`, sources are auxiliary nodes).
    Dependent { fwd: Vec<Lit>, bwd: Vec<Lit> },
    /// The answer slot: a flat bundle of its incoming literals.
    Free { lits: Vec<Lit> },
}

/// A conjunct annotated for encoding: base nodes keep their indices, and each
/// dependent node's outgoing edges spawn auxiliary independent nodes appended
/// after the base nodes (`rel` inverted, negation flag carried along).
#[derive(Debug, Clone, PartialEq)]
pub struct Annotated {
    pub n_base: usize,
    pub roles: Vec<Role>,
    /// Topological order over the base nodes.
    pub order: Vec<usize>,
}

impl Annotated {
    /// Auxiliary node count (`roles.len() − n_base`).
    pub fn n_aux(&self) -> usize {
        self.roles.len() - self.n_base
    }

    /// Closed-form MLP invocation counts for encoding this conjunct:
    /// `(mlp_i, mlp_d, mlp_n)` = (#independent + #aux, #dependent,
    /// #negated literals across dependent slots and the free node).
    pub fn mlp_counts(&self) -> (usize, usize, usize) {
        let mut i = 0;
        let mut d = 0;
        let mut n = 0;
        for role in &self.roles {
            match role {
                Role::Independent { .. } => i += 1,
                Role::Dependent { fwd, bwd } => {
                    d += 1;
                    n += fwd.iter().chain(bwd).filter(|l| l.negated).count();
                }
                Role::Free { lits } => n += lits.iter().filter(|l| l.negated).count(),
                Role::Anchor(_) => {}
            }
        }
        (i, d, n)
    }
}

/// Classifies every node of a conjunct and materializes the backward rewrite.
/// `n_forward_relations` is the KG's `R` (needed to invert relation ids).
pub fn classify(c: &Conjunct, n_forward_relations: usize) -> Result<Annotated> {
    let order = toposort(c)?;
    let n = c.nodes.len();
    let inverse = |r: RelationId| (r + n_forward_relations) % (2 * n_forward_relations);

    let mut roles: Vec<Role> = Vec::with_capacity(n);
    let mut aux_roles: Vec<Role> = Vec::new();
    for (idx, kind) in c.nodes.iter().enumerate() {
        let in_edges: Vec<&Edge> = c.edges.iter().filter(|e| e.dst == idx).collect();
        let out_edges: Vec<&Edge> = c.edges.iter().filter(|e| e.src == idx).collect();
        let role = match kind {
            NodeKind::Anchor(e) => Role::Anchor(*e),
            NodeKind::Free => Role::Free {
                lits: in_edges
                    .iter()
                    .map(|e| Lit {
                        src: e.src,
                        rel: e.rel,
                        negated: e.negated,
                    })
                    .collect(),
            },
            NodeKind::Var(_) => {
                if in_edges.is_empty() && out_edges.len() == 1 {
                    Role::Independent {
                        rel: out_edges[0].rel,
                    }
                } else {
                    let fwd = in_edges
                        .iter()
                        .map(|e| Lit {
                            src: e.src,
                            rel: e.rel,
                            negated: e.negated,
                        })
                        .collect();
                    let bwd = out_edges
                        .iter()
                        .map(|e| {
                            let aux = n + aux_roles.len();
                            aux_roles.push(Role::Independent { rel: inverse(e.rel) });
                            Lit {
                                src: aux,
                                rel: inverse(e.rel),
                                negated: e.negated,
                            }
                        })
                        .collect();
                    Role::Dependent { fwd, bwd }
                }
            }
        };
        roles.push(role);
    }
    roles.extend(aux_roles);
    Ok(Annotated {
        n_base: n,
        roles,
        order,
    })
}

// ---------------------------------------------------------------------------
// Templates
// ---------------------------------------------------------------------------

/// Anchor/relation arity of each template.
pub fn template_arity(tag: Tag) -> (usize, usize) {
    match tag {
        Tag::P1 => (1, 1),
        Tag::P2 => (1, 2),
        Tag::P3 => (1, 3),
        Tag::I2 => (2, 2),
        Tag::I3 => (3, 3),
        Tag::Pi | Tag::Ip => (2, 3),
        Tag::U2 => (2, 2),
        Tag::Up => (2, 3),
        Tag::In2 => (2, 2),
        Tag::In3 => (3, 3),
        Tag::Inp | Tag::Pin | Tag::Pni => (2, 3),
    }
}

fn conjunct(nodes: Vec<NodeKind>, edges: Vec<(usize, RelationId, usize, bool)>) -> Conjunct {
    Conjunct {
        nodes,
        edges: edges
            .into_iter()
            .map(|(src, rel, dst, negated)| Edge {
                src,
                rel,
                dst,
                negated,
            })
            .collect(),
    }
}

/// Builds a query of shape `tag` from anchors and relations (canonical node
/// order: anchors, then existential variables, then the free node last).
/// Relation ids may be inverse ids. Answer sets start empty.
pub fn instantiate(tag: Tag, anchors: &[EntityId], rels: &[RelationId]) -> Result<QueryGraph> {
    use NodeKind::{Anchor as A, Free as F, Var as V};
    let (na, nr) = template_arity(tag);
    if anchors.len() != na || rels.len() != nr {
        return Err(Error::Arity(format!(
            "template {tag} takes {na} anchors and {nr} relations; got {} and {}",
            anchors.len(),
            rels.len()
        )));
    }
    let a = anchors;
    let r = rels;
    let disjuncts = match tag {
        Tag::P1 => vec![conjunct(vec![A(a[0]), F], vec![(0, r[0], 1, false)])],
        Tag::P2 => vec![conjunct(
            vec![A(a[0]), V(0), F],
            vec![(0, r[0], 1, false), (1, r[1], 2, false)],
        )],
        Tag::P3 => vec![conjunct(
            vec![A(a[0]), V(0), V(1), F],
            vec![(0, r[0], 1, false), (1, r[1], 2, false), (2, r[2], 3, false)],
        )],
        Tag::I2 => vec![conjunct(
            vec![A(a[0]), A(a[1]), F],
            vec![(0, r[0], 2, false), (1, r[1], 2, false)],
        )],
        Tag::I3 => vec![conjunct(
            vec![A(a[0]), A(a[1]), A(a[2]), F],
            vec![(0, r[0], 3, false), (1, r[1], 3, false), (2, r[2], 3, false)],
        )],
        Tag::Pi => vec![conjunct(
            vec![A(a[0]), A(a[1]), V(0), F],
            vec![(0, r[0], 2, false), (2, r[1], 3, false), (1, r[2], 3, false)],
        )],
        Tag::Ip => vec![conjunct(
            vec![A(a[0]), A(a[1]), V(0), F],
            vec![(0, r[0], 2, false), (1, r[1], 2, false), (2, r[2], 3, false)],
        )],
        Tag::U2 => vec![
            conjunct(vec![A(a[0]), F], vec![(0, r[0], 1, false)]),
            conjunct(vec![A(a[1]), F], vec![(0, r[1], 1, false)]),
        ],
        Tag::Up => vec![
            conjunct(
                vec![A(a[0]), V(0), F],
                vec![(0, r[0], 1, false), (1, r[2], 2, false)],
            ),
            conjunct(
                vec![A(a[1]), V(0), F],
                vec![(0, r[1], 1, false), (1, r[2], 2, false)],
            ),
        ],
        Tag::In2 => vec![conjunct(
            vec![A(a[0]), A(a[1]), F],
            vec![(0, r[0], 2, false), (1, r[1], 2, true)],
        )],
        Tag::In3 => vec![conjunct(
            vec![A(a[0]), A(a[1]), A(a[2]), F],
            vec![(0, r[0], 3, false), (1, r[1], 3, false), (2, r[2], 3, true)],
        )],
        Tag::Inp => vec![conjunct(
            vec![A(a[0]), A(a[1]), V(0), F],
            vec![(0, r[0], 2, false), (1, r[1], 2, true), (2, r[2], 3, false)],
        )],
        Tag::Pin => vec![conjunct(
            vec![A(a[0]), A(a[1]), V(0), F],
            vec![(0, r[0], 2, false), (2, r[1], 3, false), (1, r[2], 3, true)],
        )],
        Tag::Pni => vec![conjunct(
            vec![A(a[0]), A(a[1]), V(0), F],
            vec![(0, r[0], 2, false), (2, r[1], 3, true), (1, r[2], 3, false)],
        )],
    };
    let q = QueryGraph {
        tag: Some(tag),
        disjuncts,
        easy: BTreeSet::new(),
        hard: BTreeSet::new(),
    };
    debug_assert!(validate_structure(&q).is_ok());
    Ok(q)
}

// ---------------------------------------------------------------------------
// JSONL wire format
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct WireQuery {
    tag: Option<String>,
    disjuncts: Vec<WireConjunct>,
    easy: Vec<String>,
    hard: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct WireConjunct {
    nodes: Vec<WireNode>,
    edges: Vec<WireEdge>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum WireNode {
    Anchor { entity: String },
    Var { id: usize },
    Free,
}

#[derive(Serialize, Deserialize)]
struct WireEdge {
    src: usize,
    rel: String,
    dst: usize,
    #[serde(default)]
    neg: bool,
}

/// Serializes one query as a single canonical JSON line (no trailing
/// newline). Structurally equal graphs serialize byte-identically: field
/// order is fixed and answer sets are emitted in ascending entity-id order.
pub fn serialize_query(q: &QueryGraph, kg: &Kg) -> Result<String> {
    let wire = WireQuery {
        tag: q.tag.map(|t| t.as_str().to_string()),
        disjuncts: q
            .disjuncts
            .iter()
            .map(|c| WireConjunct {
                nodes: c
                    .nodes
                    .iter()
                    .map(|n| match n {
                        NodeKind::Anchor(e) => WireNode::Anchor {
                            entity: kg.entity_label(*e).to_string(),
                        },
                        NodeKind::Var(v) => WireNode::Var { id: *v },
                        NodeKind::Free => WireNode::Free,
                    })
                    .collect(),
                edges: c
                    .edges
                    .iter()
                    .map(|e| WireEdge {
                        src: e.src,
                        rel: kg.relation_label(e.rel),
                        dst: e.dst,
                        neg: e.negated,
                    })
                    .collect(),
            })
            .collect(),
        easy: q.easy.iter().map(|e| kg.entity_label(*e).to_string()).collect(),
        hard: q.hard.iter().map(|e| kg.entity_label(*e).to_string()).collect(),
    };
    Ok(serde_json::to_string(&wire)?)
}

fn wire_to_query(wire: WireQuery, kg: &Kg) -> Result<QueryGraph> {
    let mut disjuncts = Vec::with_capacity(wire.disjuncts.len());
    for wc in wire.disjuncts {
        let nodes = wc
            .nodes
            .into_iter()
            .map(|n| {
                Ok(match n {
                    WireNode::Anchor { entity } => NodeKind::Anchor(kg.entity_id(&entity)?),
                    WireNode::Var { id } => NodeKind::Var(id),
                    WireNode::Free => NodeKind::Free,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let edges = wc
            .edges
            .into_iter()
            .map(|e| {
                Ok(Edge {
                    src: e.src,
                    rel: kg.relation_id(&e.rel)?,
                    dst: e.dst,
                    negated: e.neg,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        disjuncts.push(Conjunct { nodes, edges });
    }
    let to_set = |labels: Vec<String>| -> Result<BTreeSet<EntityId>> {
        labels.iter().map(|l| kg.entity_id(l)).collect()
    };
    let q = QueryGraph {
        tag: wire.tag.as_deref().map(Tag::from_str).transpose()?,
        disjuncts,
        easy: to_set(wire.easy)?,
        hard: to_set(wire.hard)?,
    };
    validate_structure(&q)?;
    Ok(q)
}

/// Parses one JSONL line. `path`/`line` only feed error messages.
pub fn parse_query(text: &str, kg: &Kg, path: &str, line: usize) -> Result<QueryGraph> {
    let wire: WireQuery = serde_json::from_str(text)
        .map_err(|e| Error::parse(path, line, format!("invalid query JSON: {e}")))?;
    wire_to_query(wire, kg)
}

/// Reads a whole JSONL query file; empty lines are skipped.
pub fn read_queries_jsonl(path: &std::path::Path, kg: &Kg) -> Result<Vec<QueryGraph>> {
    let text = std::fs::read_to_string(path)?;
    let shown = path.display().to_string();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_query(line, kg, &shown, i + 1)?);
    }
    Ok(out)
}

/// Writes queries as JSONL (one canonical line each, trailing newline).
pub fn write_queries_jsonl(path: &std::path::Path, queries: &[QueryGraph], kg: &Kg) -> Result<()> {
    let mut s = String::new();
    for q in queries {
        s.push_str(&serialize_query(q, kg)?);
        s.push('\n');
    }
    std::fs::write(path, s)?;
    Ok(())
}
