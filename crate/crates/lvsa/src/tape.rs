//! Differentiable operation tape over the model parameters.
//!
//! Query encoding is a short, data-dependent program: look up embeddings,
//! bind, bundle, run the projection MLPs, and reduce to scalar scores or
//! losses. The [`Tape`] records that program as it evaluates it (values are
//! computed eagerly at [`Tape::push`]), then [`Tape::backward`] replays it in
//! reverse with hand-derived adjoints, accumulating into a [`GradStore`].
//! Every backward rule here is checked against central finite differences in
//! the test suite.
//!
//! This module also owns [`ModelParams`] — the embedding tables and the three
//! projection MLPs — including the canonical flat parameter order shared by
//! the optimizer state, the gradient checker, and the checkpoint format.

use std::borrow::Cow;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::kg::{EntityId, RelationId};
use crate::nn::{Mlp, MlpTrace};
use crate::rng::seeded_rng;
use crate::vsa::{
    bind_stacked, conjugate_stacked, dot, norm_add_parts, sign, NormAddParts, Table, NORM_EPS,
};

/// RNG stream tags for parameter initialization (one independent stream per
/// block so adding entities does not reshuffle relation draws).
const STREAM_ENTITIES: u64 = 1;
const STREAM_RELATIONS: u64 = 2;
const STREAM_MLP_I: u64 = 3;
const STREAM_MLP_D: u64 = 4;
const STREAM_MLP_N: u64 = 5;

/// Selects one of the three projection networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlpSel {
    /// Independent-node projection: `2d → 2d`, two layers.
    I,
    /// Dependent-node projection: `4d → 2d`, three layers.
    D,
    /// Negation projection: `4d → 2d`, two layers.
    N,
}

/// Layer dims for the independent-node MLP at embedding dimension `d`.
pub fn mlp_i_dims(d: usize) -> Vec<(usize, usize)> {
    let s = 2 * d;
    vec![(s, s), (s, s)]
}

/// Layer dims for the dependent-node MLP at embedding dimension `d`.
pub fn mlp_d_dims(d: usize) -> Vec<(usize, usize)> {
    let s = 2 * d;
    vec![(2 * s, 2 * s), (2 * s, 2 * s), (2 * s, s)]
}

/// Layer dims for the negation MLP at embedding dimension `d`.
pub fn mlp_n_dims(d: usize) -> Vec<(usize, usize)> {
    let s = 2 * d;
    vec![(2 * s, 2 * s), (2 * s, s)]
}

// ---------------------------------------------------------------------------
// ModelParams
// ---------------------------------------------------------------------------

/// Everything the model learns: entity/relation embedding tables plus the
/// three projection MLPs, with the hyperparameters needed to evaluate them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Complex embedding dimension; stacked vectors have `2d` components.
    pub d: usize,
    /// LeakyReLU negative slope used by all three MLPs.
    pub leaky_slope: f64,
    /// When set, inverse-relation embeddings are the complex conjugates of
    /// their forward rows instead of independent parameters.
    pub tie_inverse: bool,
    /// Number of forward relations `R`; relation ids `R..2R` are inverses.
    pub n_forward_relations: usize,
    pub entities: Table,
    /// `R` rows when `tie_inverse`, otherwise `2R` (forward rows first).
    pub relations: Table,
    pub mlp_i: Mlp,
    pub mlp_d: Mlp,
    pub mlp_n: Mlp,
}

/// Flat-parameter spans of each block, in canonical order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockRanges {
    pub entities: Range<usize>,
    pub relations: Range<usize>,
    pub mlp_i: Range<usize>,
    pub mlp_d: Range<usize>,
    pub mlp_n: Range<usize>,
}

impl ModelParams {
    /// Seeded initialization: tables uniform in `±1/√d`, MLP weights uniform
    /// in `±1/√fan_in` with zero biases. Each block draws from its own
    /// derived RNG stream.
    pub fn init(
        d: usize,
        n_entities: usize,
        n_forward_relations: usize,
        tie_inverse: bool,
        leaky_slope: f64,
        seed: u64,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::Dimension("embedding dimension must be positive".into()));
        }
        let rel_rows = if tie_inverse {
            n_forward_relations
        } else {
            2 * n_forward_relations
        };
        Ok(ModelParams {
            d,
            leaky_slope,
            tie_inverse,
            n_forward_relations,
            entities: Table::seeded_uniform(n_entities, d, &mut seeded_rng(seed, STREAM_ENTITIES)),
            relations: Table::seeded_uniform(rel_rows, d, &mut seeded_rng(seed, STREAM_RELATIONS)),
            mlp_i: Mlp::seeded(&mlp_i_dims(d), &mut seeded_rng(seed, STREAM_MLP_I)),
            mlp_d: Mlp::seeded(&mlp_d_dims(d), &mut seeded_rng(seed, STREAM_MLP_D)),
            mlp_n: Mlp::seeded(&mlp_n_dims(d), &mut seeded_rng(seed, STREAM_MLP_N)),
        })
    }

    /// Stacked width `2d`.
    pub fn s(&self) -> usize {
        2 * self.d
    }

    pub fn n_entities(&self) -> usize {
        self.entities.rows()
    }

    /// Size of the relation *id* space (forward + inverse), independent of
    /// whether inverse rows are tied.
    pub fn n_relation_ids(&self) -> usize {
        2 * self.n_forward_relations
    }

    /// Embedding row for any relation id. Tied inverse ids materialize the
    /// conjugate of their forward row.
    pub fn relation_row(&self, r: RelationId) -> Result<Cow<'_, [f64]>> {
        if r >= self.n_relation_ids() {
            return Err(Error::Vocab(format!("relation id {r} out of range")));
        }
        if self.tie_inverse && r >= self.n_forward_relations {
            Ok(Cow::Owned(conjugate_stacked(
                self.relations.row(r - self.n_forward_relations),
            )))
        } else {
            Ok(Cow::Borrowed(self.relations.row(r)))
        }
    }

    fn mlp(&self, sel: MlpSel) -> &Mlp {
        match sel {
            MlpSel::I => &self.mlp_i,
            MlpSel::D => &self.mlp_d,
            MlpSel::N => &self.mlp_n,
        }
    }

    pub fn n_params(&self) -> usize {
        self.entities.data().len()
            + self.relations.data().len()
            + self.mlp_i.n_params()
            + self.mlp_d.n_params()
            + self.mlp_n.n_params()
    }

    /// Canonical flat layout: entities, relations, then the three MLPs (each
    /// layer's weights before its biases). Checkpoints, Adam moments, and the
    /// finite-difference checker all index this order.
    pub fn block_ranges(&self) -> BlockRanges {
        let ne = self.entities.data().len();
        let nr = self.relations.data().len();
        let ni = self.mlp_i.n_params();
        let nd = self.mlp_d.n_params();
        let nn = self.mlp_n.n_params();
        let mut k = 0;
        let mut next = |n: usize| {
            let r = k..k + n;
            k += n;
            r
        };
        BlockRanges {
            entities: next(ne),
            relations: next(nr),
            mlp_i: next(ni),
            mlp_d: next(nd),
            mlp_n: next(nn),
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        out.extend_from_slice(self.entities.data());
        out.extend_from_slice(self.relations.data());
        self.mlp_i.append_params(&mut out);
        self.mlp_d.append_params(&mut out);
        self.mlp_n.append_params(&mut out);
        out
    }

    pub fn load_flat(&mut self, src: &[f64]) -> Result<()> {
        if src.len() != self.n_params() {
            return Err(Error::Dimension(format!(
                "flat parameter vector has {} values, model needs {}",
                src.len(),
                self.n_params()
            )));
        }
        let r = self.block_ranges();
        self.entities.data_mut().copy_from_slice(&src[r.entities]);
        self.relations.data_mut().copy_from_slice(&src[r.relations]);
        self.mlp_i.load_params(&src[r.mlp_i]);
        self.mlp_d.load_params(&src[r.mlp_d]);
        self.mlp_n.load_params(&src[r.mlp_n]);
        Ok(())
    }

    /// Structural consistency check (used after deserialization).
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Integrity(msg));
        if self.d == 0 {
            return fail("embedding dimension is zero".into());
        }
        if self.entities.d() != self.d || self.relations.d() != self.d {
            return fail("table width disagrees with model dimension".into());
        }
        let want_rel_rows = if self.tie_inverse {
            self.n_forward_relations
        } else {
            2 * self.n_forward_relations
        };
        if self.relations.rows() != want_rel_rows {
            return fail(format!(
                "relation table has {} rows, expected {}",
                self.relations.rows(),
                want_rel_rows
            ));
        }
        if self.mlp_i.dims() != mlp_i_dims(self.d)
            || self.mlp_d.dims() != mlp_d_dims(self.d)
            || self.mlp_n.dims() != mlp_n_dims(self.d)
        {
            return fail("MLP layer shapes disagree with model dimension".into());
        }
        if !self.leaky_slope.is_finite() || self.leaky_slope < 0.0 {
            return fail(format!("invalid activation slope {}", self.leaky_slope));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// GradStore
// ---------------------------------------------------------------------------

/// Dense gradient accumulator shaped like [`ModelParams`]. One store lives
/// per batch; every item's tape backward adds into it.
#[derive(Debug, Clone)]
pub struct GradStore {
    /// `n_entities × 2d`, row-major (same layout as the entity table data).
    pub entities: Vec<f64>,
    /// `rel_rows × 2d`; tied-inverse gradients fold onto forward rows.
    pub relations: Vec<f64>,
    pub mlp_i: Mlp,
    pub mlp_d: Mlp,
    pub mlp_n: Mlp,
    s: usize,
}

impl GradStore {
    pub fn zeros(p: &ModelParams) -> Self {
        GradStore {
            entities: vec![0.0; p.entities.data().len()],
            relations: vec![0.0; p.relations.data().len()],
            mlp_i: p.mlp_i.zeros_like(),
            mlp_d: p.mlp_d.zeros_like(),
            mlp_n: p.mlp_n.zeros_like(),
            s: p.s(),
        }
    }

    fn add_entity(&mut self, e: EntityId, scale: f64, g: &[f64]) {
        let row = &mut self.entities[e * self.s..(e + 1) * self.s];
        for (r, &x) in row.iter_mut().zip(g) {
            *r += scale * x;
        }
    }

    fn add_relation_row(&mut self, row_idx: usize, g: &[f64]) {
        let row = &mut self.relations[row_idx * self.s..(row_idx + 1) * self.s];
        for (r, &x) in row.iter_mut().zip(g) {
            *r += x;
        }
    }

    fn mlp_mut(&mut self, sel: MlpSel) -> &mut Mlp {
        match sel {
            MlpSel::I => &mut self.mlp_i,
            MlpSel::D => &mut self.mlp_d,
            MlpSel::N => &mut self.mlp_n,
        }
    }

    /// Same canonical order as [`ModelParams::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.entities);
        out.extend_from_slice(&self.relations);
        self.mlp_i.append_params(&mut out);
        self.mlp_d.append_params(&mut out);
        self.mlp_n.append_params(&mut out);
        out
    }
}

// ---------------------------------------------------------------------------
// Tape ops
// ---------------------------------------------------------------------------

pub type NodeId = usize;

/// Candidate set of a log-sum-exp score reduction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Cands {
    /// Every entity in the vocabulary.
    All,
    /// An explicit entity list (iterated in the given order).
    Set(Vec<EntityId>),
}

/// One recorded operation. Vector-valued ops produce stacked complex slices;
/// `SqDist`, `MaxDot`, `LseMaxDot`, and `LogSigmoid` produce scalars
/// (length-1 values) that can be seeded in [`Tape::backward`].
#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    /// Entity embedding lookup.
    Entity(EntityId),
    /// Relation embedding lookup (tied inverse ids resolve to conjugates).
    Relation(RelationId),
    /// All-zeros vector of the given length (placeholder bundle).
    Zeros(usize),
    /// Complex Hadamard binding.
    Bind { a: NodeId, b: NodeId },
    /// Magnitude-preserving bundle of same-length vectors.
    NormAdd(Vec<NodeId>),
    /// Concatenation.
    Concat(Vec<NodeId>),
    /// Projection MLP application.
    Mlp { sel: MlpSel, x: NodeId },
    /// Elementwise negation.
    NegV(NodeId),
    /// Squared Euclidean distance ‖a − b‖² (scalar).
    SqDist { a: NodeId, b: NodeId },
    /// `max_j ⟨qs[j], e_target⟩` over disjunct encodings (scalar); the
    /// subgradient routes to the arg-max disjunct and the target row.
    MaxDot { qs: Vec<NodeId>, target: EntityId },
    /// `ln Σ_{e∈cands} exp(max_j ⟨qs[j], e⟩)` (scalar).
    LseMaxDot { qs: Vec<NodeId>, cands: Cands },
    /// `ln σ(x)` of a scalar node, numerically stable.
    LogSigmoid(NodeId),
}

/// Saved forward intermediates a backward rule needs.
enum Cache {
    None,
    Mlp(MlpTrace),
    Norm(NormAddParts),
    /// Arg-max disjunct index.
    Max(usize),
    /// Per-candidate softmax probability and arg-max disjunct index.
    Lse { probs: Vec<f64>, arg: Vec<u32> },
}

struct TapeNode {
    op: Op,
    /// `(start, len)` of this node's value in the shared arena.
    span: (usize, usize),
    cache: Cache,
}

/// The recorded program. Holds a borrow of the parameters it reads so the
/// backward pass can replay lookups consistently. Node values live in one
/// append-only arena so recording an op never heap-allocates on its own.
pub struct Tape<'p> {
    params: &'p ModelParams,
    nodes: Vec<TapeNode>,
    buf: Vec<f64>,
}

/// Reserves `len` zeroed slots at the end of the arena and returns the
/// earlier contents alongside the fresh slot.
fn arena_alloc(buf: &mut Vec<f64>, len: usize) -> (&[f64], &mut [f64]) {
    let start = buf.len();
    buf.resize(start + len, 0.0);
    let (earlier, out) = buf.split_at_mut(start);
    (&*earlier, out)
}

fn stable_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// σ(−x) = 1 − σ(x), the derivative of `ln σ(x)`.
fn sigmoid_neg(x: f64) -> f64 {
    if x >= 0.0 {
        let t = (-x).exp();
        t / (1.0 + t)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ModelParams) -> Self {
        Tape {
            params,
            nodes: Vec::with_capacity(64),
            buf: Vec::with_capacity(64 * params.s().max(4)),
        }
    }

    pub fn params(&self) -> &ModelParams {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        let (start, len) = self.nodes[id].span;
        &self.buf[start..start + len]
    }

    /// Value of a scalar node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id].span.1, 1, "node {id} is not scalar");
        self.buf[self.nodes[id].span.0]
    }

    /// Number of recorded applications of each projection MLP `(I, D, N)`.
    pub fn mlp_call_counts(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for n in &self.nodes {
            if let Op::Mlp { sel, .. } = n.op {
                match sel {
                    MlpSel::I => c.0 += 1,
                    MlpSel::D => c.1 += 1,
                    MlpSel::N => c.2 += 1,
                }
            }
        }
        c
    }

    fn check_ref(&self, id: NodeId) -> Result<&[f64]> {
        self.nodes
            .get(id)
            .map(|n| &self.buf[n.span.0..n.span.0 + n.span.1])
            .ok_or_else(|| Error::Structure(format!("tape op references future node {id}")))
    }


    fn check_same(&self, ids: &[NodeId], what: &str) -> Result<usize> {
        let first = self.check_ref(ids[0])?.len();
        for &id in &ids[1..] {
            if self.check_ref(id)?.len() != first {
                return Err(Error::Dimension(format!(
                    "{what}: mixed operand lengths on the tape"
                )));
            }
        }
        Ok(first)
    }

    /// Records `op`, eagerly computing its value into the arena. Operand ids
    /// must refer to earlier nodes.
    pub fn push(&mut self, op: Op) -> Result<NodeId> {
        let p = self.params;
        let s = p.s();
        let start = self.buf.len();
        let cache = match &op {
            Op::Entity(e) => {
                if *e >= p.n_entities() {
                    return Err(Error::Vocab(format!("entity id {e} out of range")));
                }
                self.buf.extend_from_slice(p.entities.row(*e));
                Cache::None
            }
            Op::Relation(r) => {
                let row = p.relation_row(*r)?;
                self.buf.extend_from_slice(&row);
                Cache::None
            }
            Op::Zeros(len) => {
                self.buf.resize(start + len, 0.0);
                Cache::None
            }
            Op::Bind { a, b } => {
                let (va, vb) = (self.check_ref(*a)?, self.check_ref(*b)?);
                if va.len() != vb.len() || va.len() % 2 != 0 {
                    return Err(Error::Dimension(
                        "bind needs two stacked vectors of one even length".into(),
                    ));
                }
                let len = va.len();
                let (sa, sb) = (self.nodes[*a].span, self.nodes[*b].span);
                let (earlier, out) = arena_alloc(&mut self.buf, len);
                bind_stacked(
                    &earlier[sa.0..sa.0 + sa.1],
                    &earlier[sb.0..sb.0 + sb.1],
                    out,
                );
                Cache::None
            }
            Op::NormAdd(xs) => {
                if xs.is_empty() {
                    return Err(Error::Dimension("norm_add of zero vectors".into()));
                }
                self.check_same(xs, "norm_add")?;
                let inputs: Vec<&[f64]> = xs.iter().map(|&i| self.value(i)).collect();
                let parts = norm_add_parts(&inputs)?;
                if parts.l_bar <= NORM_EPS {
                    self.buf.resize(start + parts.mean.len(), 0.0);
                } else {
                    let scale = parts.l_in / parts.l_bar;
                    self.buf.extend(parts.mean.iter().map(|&m| m * scale));
                }
                Cache::Norm(parts)
            }
            Op::Concat(xs) => {
                let mut total = 0;
                for &x in xs {
                    total += self.check_ref(x)?.len();
                }
                let (earlier, out) = arena_alloc(&mut self.buf, total);
                let mut off = 0;
                for &x in xs {
                    let (o, l) = self.nodes[x].span;
                    out[off..off + l].copy_from_slice(&earlier[o..o + l]);
                    off += l;
                }
                Cache::None
            }
            Op::Mlp { sel, x } => {
                let vx = self.check_ref(*x)?;
                let mlp = p.mlp(*sel);
                if vx.len() != mlp.in_dim() {
                    return Err(Error::Dimension(format!(
                        "MLP input has {} components, network expects {}",
                        vx.len(),
                        mlp.in_dim()
                    )));
                }
                let (out, trace) = mlp.forward_trace(vx, p.leaky_slope);
                self.buf.extend_from_slice(&out);
                Cache::Mlp(trace)
            }
            Op::NegV(x) => {
                let len = self.check_ref(*x)?.len();
                let (o, _) = self.nodes[*x].span;
                let (earlier, out) = arena_alloc(&mut self.buf, len);
                for (t, &v) in out.iter_mut().zip(&earlier[o..o + len]) {
                    *t = -v;
                }
                Cache::None
            }
            Op::SqDist { a, b } => {
                let (va, vb) = (self.check_ref(*a)?, self.check_ref(*b)?);
                if va.len() != vb.len() {
                    return Err(Error::Dimension("sq_dist operand length mismatch".into()));
                }
                let d2: f64 = va.iter().zip(vb).map(|(x, y)| (x - y) * (x - y)).sum();
                self.buf.push(d2);
                Cache::None
            }
            Op::MaxDot { qs, target } => {
                if qs.is_empty() {
                    return Err(Error::Dimension("max_dot over zero disjuncts".into()));
                }
                if *target >= p.n_entities() {
                    return Err(Error::Vocab(format!("entity id {target} out of range")));
                }
                if self.check_same(qs, "max_dot")? != s {
                    return Err(Error::Dimension(
                        "max_dot disjunct width differs from entity width".into(),
                    ));
                }
                let e = p.entities.row(*target);
                let (mut best, mut arg) = (f64::NEG_INFINITY, 0usize);
                for (j, &q) in qs.iter().enumerate() {
                    let sc = dot(self.value(q), e);
                    if sc > best {
                        best = sc;
                        arg = j;
                    }
                }
                self.buf.push(best);
                Cache::Max(arg)
            }
            Op::LseMaxDot { qs, cands } => {
                if qs.is_empty() {
                    return Err(Error::Dimension("lse over zero disjuncts".into()));
                }
                if self.check_same(qs, "lse_max_dot")? != s {
                    return Err(Error::Dimension(
                        "lse disjunct width differs from entity width".into(),
                    ));
                }
                let n_c = match cands {
                    Cands::All => p.n_entities(),
                    Cands::Set(v) => v.len(),
                };
                if n_c == 0 {
                    return Err(Error::Dimension("lse over an empty candidate set".into()));
                }
                let ent = |c: usize| -> EntityId {
                    match cands {
                        Cands::All => c,
                        Cands::Set(v) => v[c],
                    }
                };
                if let Cands::Set(v) = cands {
                    if let Some(&bad) = v.iter().find(|&&e| e >= p.n_entities()) {
                        return Err(Error::Vocab(format!("entity id {bad} out of range")));
                    }
                }
                let qvals: Vec<&[f64]> = qs.iter().map(|&q| self.value(q)).collect();
                let mut scores = Vec::with_capacity(n_c);
                let mut arg = Vec::with_capacity(n_c);
                for c in 0..n_c {
                    let e = p.entities.row(ent(c));
                    let (mut best, mut a) = (f64::NEG_INFINITY, 0u32);
                    for (j, q) in qvals.iter().enumerate() {
                        let sc = dot(q, e);
                        if sc > best {
                            best = sc;
                            a = j as u32;
                        }
                    }
                    scores.push(best);
                    arg.push(a);
                }
                let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = scores.iter().map(|&sc| (sc - m).exp()).sum();
                let probs: Vec<f64> = scores.iter().map(|&sc| (sc - m).exp() / z).collect();
                self.buf.push(m + z.ln());
                Cache::Lse { probs, arg }
            }
            Op::LogSigmoid(x) => {
                let vx = self.check_ref(*x)?;
                if vx.len() != 1 {
                    return Err(Error::Dimension("log-sigmoid needs a scalar node".into()));
                }
                let y = stable_log_sigmoid(vx[0]);
                self.buf.push(y);
                Cache::None
            }
        };
        let span = (start, self.buf.len() - start);
        self.nodes.push(TapeNode { op, span, cache });
        Ok(self.nodes.len() - 1)
    }

    /// Reverse sweep. Each `(node, weight)` seed contributes `weight` to the
    /// adjoint of a *scalar* node, i.e. the implied objective is
    /// `Σ weightᵢ · value(nodeᵢ)`. Gradients accumulate into `grads`.
    pub fn backward(&self, seeds: &[(NodeId, f64)], grads: &mut GradStore) -> Result<()> {
        let mut adj: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        for &(id, w) in seeds {
            let node = self
                .nodes
                .get(id)
                .ok_or_else(|| Error::Structure(format!("seed references unknown node {id}")))?;
            if node.span.1 != 1 {
                return Err(Error::Dimension(format!(
                    "seeded node {id} is not scalar"
                )));
            }
            adj[id].get_or_insert_with(|| vec![0.0; 1])[0] += w;
        }
        let p = self.params;
        let bump = |adj: &mut Vec<Option<Vec<f64>>>, id: NodeId, scale: f64, src: &[f64]| {
            let a = adj[id].get_or_insert_with(|| vec![0.0; src.len()]);
            for (t, &v) in a.iter_mut().zip(src) {
                *t += scale * v;
            }
        };
        for id in (0..self.nodes.len()).rev() {
            let Some(g) = adj[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Entity(e) => grads.add_entity(*e, 1.0, &g),
                Op::Relation(r) => {
                    if p.tie_inverse && *r >= p.n_forward_relations {
                        // value = conj(row): re passes through, im flips.
                        grads.add_relation_row(
                            r - p.n_forward_relations,
                            &conjugate_stacked(&g),
                        );
                    } else {
                        grads.add_relation_row(*r, &g);
                    }
                }
                Op::Zeros(_) => {}
                Op::Bind { a, b } => {
                    // y = a∗b (complex Hadamard) ⇒ ∂L/∂a = g∗conj(b).
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let mut ga = vec![0.0; g.len()];
                    bind_stacked(&g, &conjugate_stacked(vb), &mut ga);
                    bump(&mut adj, *a, 1.0, &ga);
                    let mut gb = vec![0.0; g.len()];
                    bind_stacked(&g, &conjugate_stacked(va), &mut gb);
                    bump(&mut adj, *b, 1.0, &gb);
                }
                Op::NormAdd(xs) => {
                    let Cache::Norm(parts) = &node.cache else { unreachable!() };
                    if parts.l_bar <= NORM_EPS {
                        continue; // collapsed bundle: output pinned at zero
                    }
                    let s_len = g.len() as f64;
                    let n = xs.len() as f64;
                    let big_s = parts.l_in / parts.l_bar;
                    let gm = dot(&g, &parts.mean);
                    let u = gm / (s_len * n * parts.l_bar);
                    // grad_{j,k} = S·g_k/n − u·S·sign(m_k) + u·sign(x_{j,k})
                    let base: Vec<f64> = g
                        .iter()
                        .zip(&parts.mean)
                        .map(|(&gk, &mk)| big_s * gk / n - u * big_s * sign(mk))
                        .collect();
                    for &x in xs {
                        let vx = self.value(x);
                        let gx: Vec<f64> = base
                            .iter()
                            .zip(vx)
                            .map(|(&bk, &xk)| bk + u * sign(xk))
                            .collect();
                        bump(&mut adj, x, 1.0, &gx);
                    }
                }
                Op::Concat(xs) => {
                    let mut off = 0;
                    for &x in xs {
                        let len = self.value(x).len();
                        bump(&mut adj, x, 1.0, &g[off..off + len]);
                        off += len;
                    }
                }
                Op::Mlp { sel, x } => {
                    let Cache::Mlp(trace) = &node.cache else { unreachable!() };
                    let dx = p
                        .mlp(*sel)
                        .backward(trace, &g, p.leaky_slope, grads.mlp_mut(*sel));
                    bump(&mut adj, *x, 1.0, &dx);
                }
                Op::NegV(x) => bump(&mut adj, *x, -1.0, &g),
                Op::SqDist { a, b } => {
                    let g0 = g[0];
                    let diff: Vec<f64> = self
                        .value(*a)
                        .iter()
                        .zip(self.value(*b))
                        .map(|(x, y)| x - y)
                        .collect();
                    bump(&mut adj, *a, 2.0 * g0, &diff);
                    bump(&mut adj, *b, -2.0 * g0, &diff);
                }
                Op::MaxDot { qs, target } => {
                    let Cache::Max(argmax) = node.cache else { unreachable!() };
                    let g0 = g[0];
                    bump(&mut adj, qs[argmax], g0, p.entities.row(*target));
                    grads.add_entity(*target, g0, self.value(qs[argmax]));
                }
                Op::LseMaxDot { qs, cands } => {
                    let Cache::Lse { probs, arg } = &node.cache else { unreachable!() };
                    let g0 = g[0];
                    for (c, (&pc, &jc)) in probs.iter().zip(arg).enumerate() {
                        let e = match cands {
                            Cands::All => c,
                            Cands::Set(v) => v[c],
                        };
                        bump(&mut adj, qs[jc as usize], g0 * pc, p.entities.row(e));
                        grads.add_entity(e, g0 * pc, self.value(qs[jc as usize]));
                    }
                }
                Op::LogSigmoid(x) => {
                    let vx = self.value(*x)[0];
                    bump(&mut adj, *x, 1.0, &[g[0] * sigmoid_neg(vx)]);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vsa::{norm_add_stacked, ComplexVec};

    fn small_params(tie: bool) -> ModelParams {
        ModelParams::init(3, 5, 2, tie, 0.01, 7).unwrap()
    }

    // -----------------------------------------------------------------
    // Parameter container
    // -----------------------------------------------------------------

    #[test]
    fn init_is_deterministic_and_shaped() {
        let a = small_params(false);
        let b = small_params(false);
        assert_eq!(a, b);
        assert_eq!(a.entities.rows(), 5);
        assert_eq!(a.relations.rows(), 4, "untied: forward + inverse rows");
        assert_eq!(small_params(true).relations.rows(), 2, "tied: forward only");
        assert_eq!(a.mlp_i.dims(), vec![(6, 6), (6, 6)]);
        assert_eq!(a.mlp_d.dims(), vec![(12, 12), (12, 12), (12, 6)]);
        assert_eq!(a.mlp_n.dims(), vec![(12, 12), (12, 6)]);
        a.validate().unwrap();
    }

    #[test]
    fn tied_relation_row_is_conjugate_of_forward() {
        let p = small_params(true);
        let fwd = p.relation_row(1).unwrap().into_owned();
        let inv = p.relation_row(1 + p.n_forward_relations).unwrap().into_owned();
        assert_eq!(inv, conjugate_stacked(&fwd));
        assert!(p.relation_row(99).is_err(), "out-of-range id rejected");
    }

    #[test]
    fn flat_round_trip_and_block_ranges() {
        let p = small_params(false);
        let flat = p.to_flat();
        assert_eq!(flat.len(), p.n_params());
        let r = p.block_ranges();
        assert_eq!(r.entities.start, 0);
        assert_eq!(r.mlp_n.end, p.n_params());
        let mut q = ModelParams::init(3, 5, 2, false, 0.01, 8).unwrap();
        assert_ne!(q, p);
        q.load_flat(&flat).unwrap();
        assert_eq!(q, p);
        assert!(q.load_flat(&flat[1..]).is_err(), "wrong length rejected");
    }

    // -----------------------------------------------------------------
    // Forward values
    // -----------------------------------------------------------------

    #[test]
    fn forward_values_match_reference_kernels() {
        let p = small_params(false);
        let mut t = Tape::new(&p);
        let e0 = t.push(Op::Entity(0)).unwrap();
        let r1 = t.push(Op::Relation(1)).unwrap();
        assert_eq!(t.value(e0), p.entities.row(0));
        assert_eq!(t.value(r1), p.relations.row(1));

        let b = t.push(Op::Bind { a: e0, b: r1 }).unwrap();
        let want = ComplexVec::from_stacked(p.entities.row(0))
            .bind(&ComplexVec::from_stacked(p.relations.row(1)))
            .unwrap();
        assert_eq!(t.value(b), want.stacked().as_slice());

        let e2 = t.push(Op::Entity(2)).unwrap();
        let na = t.push(Op::NormAdd(vec![b, e2])).unwrap();
        let want = norm_add_stacked(&[t.value(b), t.value(e2)]).unwrap();
        assert_eq!(t.value(na), want.as_slice());

        let z = t.push(Op::Zeros(6)).unwrap();
        assert_eq!(t.value(z), &[0.0; 6]);
        let cat = t.push(Op::Concat(vec![na, z])).unwrap();
        assert_eq!(t.value(cat).len(), 12);
        assert_eq!(&t.value(cat)[..6], t.value(na));

        let mi = t.push(Op::Mlp { sel: MlpSel::I, x: na }).unwrap();
        assert_eq!(t.value(mi), p.mlp_i.forward(t.value(na), 0.01).as_slice());
        let md = t.push(Op::Mlp { sel: MlpSel::D, x: cat }).unwrap();
        assert_eq!(t.value(md), p.mlp_d.forward(t.value(cat), 0.01).as_slice());
        assert_eq!(t.mlp_call_counts(), (1, 1, 0));

        let nv = t.push(Op::NegV(mi)).unwrap();
        let neg: Vec<f64> = t.value(mi).iter().map(|v| -v).collect();
        assert_eq!(t.value(nv), neg.as_slice());

        let sq = t.push(Op::SqDist { a: mi, b: md }).unwrap();
        let want: f64 = t
            .value(mi)
            .iter()
            .zip(t.value(md))
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        assert_eq!(t.scalar(sq), want);

        let mx = t
            .push(Op::MaxDot { qs: vec![mi, md], target: 3 })
            .unwrap();
        let s1 = dot(t.value(mi), p.entities.row(3));
        let s2 = dot(t.value(md), p.entities.row(3));
        assert_eq!(t.scalar(mx), s1.max(s2));

        // Single-candidate LSE degenerates to the plain score.
        let lse1 = t
            .push(Op::LseMaxDot { qs: vec![mi], cands: Cands::Set(vec![4]) })
            .unwrap();
        let want = dot(t.value(mi), p.entities.row(4));
        assert!((t.scalar(lse1) - want).abs() < 1e-12);

        // All-candidates LSE against a scalar reference computation.
        let lse = t
            .push(Op::LseMaxDot { qs: vec![mi, md], cands: Cands::All })
            .unwrap();
        let mut z_sum = 0.0;
        for e in 0..p.n_entities() {
            let sc = dot(t.value(mi), p.entities.row(e))
                .max(dot(t.value(md), p.entities.row(e)));
            z_sum += sc.exp();
        }
        assert!((t.scalar(lse) - z_sum.ln()).abs() < 1e-9);

        let ls = t.push(Op::LogSigmoid(mx)).unwrap();
        let x = t.scalar(mx);
        assert!((t.scalar(ls) - (1.0 / (1.0 + (-x).exp())).ln()).abs() < 1e-12);
    }

    #[test]
    fn stable_log_sigmoid_handles_extremes() {
        assert!((stable_log_sigmoid(0.0) - 0.5f64.ln()).abs() < 1e-15);
        assert!(stable_log_sigmoid(60.0).abs() < 1e-15, "lnσ(60) ≈ 0");
        assert!((stable_log_sigmoid(-60.0) + 60.0).abs() < 1e-9, "lnσ(−60) ≈ −60");
        assert!(stable_log_sigmoid(-750.0).is_finite());
        assert!((sigmoid_neg(0.0) - 0.5).abs() < 1e-15);
        assert!((sigmoid_neg(-60.0) - 1.0).abs() < 1e-15);
        assert!(sigmoid_neg(60.0) < 1e-20);
    }

    #[test]
    fn push_rejects_malformed_ops() {
        let p = small_params(false);
        let mut t = Tape::new(&p);
        assert!(t.push(Op::Entity(99)).is_err());
        assert!(t.push(Op::Relation(99)).is_err());
        assert!(t.push(Op::Bind { a: 0, b: 0 }).is_err(), "future reference");
        let e = t.push(Op::Entity(0)).unwrap();
        let z3 = t.push(Op::Zeros(3)).unwrap();
        assert!(t.push(Op::Bind { a: e, b: z3 }).is_err(), "length mismatch");
        assert!(t.push(Op::NormAdd(vec![])).is_err(), "empty bundle");
        assert!(t.push(Op::NormAdd(vec![e, z3])).is_err(), "mixed lengths");
        assert!(t.push(Op::Mlp { sel: MlpSel::D, x: e }).is_err(), "wrong MLP width");
        assert!(t.push(Op::SqDist { a: e, b: z3 }).is_err());
        assert!(t.push(Op::MaxDot { qs: vec![], target: 0 }).is_err());
        assert!(t.push(Op::MaxDot { qs: vec![e], target: 99 }).is_err());
        assert!(t.push(Op::MaxDot { qs: vec![z3], target: 0 }).is_err(), "width");
        assert!(
            t.push(Op::LseMaxDot { qs: vec![e], cands: Cands::Set(vec![]) }).is_err(),
            "empty candidate set"
        );
        assert!(
            t.push(Op::LseMaxDot { qs: vec![e], cands: Cands::Set(vec![99]) }).is_err(),
            "unknown candidate"
        );
        assert!(t.push(Op::LogSigmoid(e)).is_err(), "vector into log-sigmoid");
        // Seeding a vector node is rejected too.
        let mut g = GradStore::zeros(&p);
        assert!(t.backward(&[(e, 1.0)], &mut g).is_err());
        assert!(t.backward(&[(999, 1.0)], &mut g).is_err());
    }

    // -----------------------------------------------------------------
    // Backward: finite-difference oracle
    // -----------------------------------------------------------------

    /// Builds a composite program exercising every op kind, returning the
    /// seeded scalar objective Σ wᵢ·valueᵢ and its seeds.
    fn build_program(p: &ModelParams) -> (Tape<'_>, Vec<(NodeId, f64)>) {
        let s = p.s();
        let mut t = Tape::new(p);
        let a = t.push(Op::Entity(0)).unwrap();
        let r1 = t.push(Op::Relation(1)).unwrap();
        let b = t.push(Op::Bind { a, b: r1 }).unwrap();
        let i = t.push(Op::Mlp { sel: MlpSel::I, x: b }).unwrap();
        let e2 = t.push(Op::Entity(2)).unwrap();
        let r_inv = t.push(Op::Relation(2)).unwrap(); // inverse id (R = 2)
        let c = t.push(Op::Bind { a: e2, b: r_inv }).unwrap();
        let na = t.push(Op::NormAdd(vec![i, c, b])).unwrap();
        let z = t.push(Op::Zeros(s)).unwrap();
        let cat = t.push(Op::Concat(vec![na, z])).unwrap();
        let dn = t.push(Op::Mlp { sel: MlpSel::D, x: cat }).unwrap();
        let ctx = t.push(Op::Concat(vec![na, dn])).unwrap();
        let ng = t.push(Op::Mlp { sel: MlpSel::N, x: ctx }).unwrap();
        let o_lse = t
            .push(Op::LseMaxDot { qs: vec![dn, i], cands: Cands::All })
            .unwrap();
        let o_lse2 = t
            .push(Op::LseMaxDot { qs: vec![na], cands: Cands::Set(vec![0, 2, 4]) })
            .unwrap();
        let mx = t.push(Op::MaxDot { qs: vec![ng], target: 3 }).unwrap();
        let o_sig = t.push(Op::LogSigmoid(mx)).unwrap();
        let nv = t.push(Op::NegV(i)).unwrap();
        let o_sq = t.push(Op::SqDist { a: ng, b: nv }).unwrap();
        let seeds = vec![(o_lse, 0.7), (o_lse2, 0.5), (o_sig, -0.4), (o_sq, 0.25)];
        (t, seeds)
    }

    fn program_loss(p: &ModelParams) -> f64 {
        let (t, seeds) = build_program(p);
        seeds.iter().map(|&(id, w)| w * t.scalar(id)).sum()
    }

    fn fd_check(mut p: ModelParams) {
        let (t, seeds) = build_program(&p);
        let mut grads = GradStore::zeros(&p);
        t.backward(&seeds, &mut grads).unwrap();
        drop(t);
        let analytic = grads.to_flat();
        let mut flat = p.to_flat();
        assert_eq!(analytic.len(), flat.len());
        let eps = 1e-5;
        let mut checked = 0usize;
        for k in 0..flat.len() {
            let orig = flat[k];
            flat[k] = orig + eps;
            p.load_flat(&flat).unwrap();
            let up = program_loss(&p);
            flat[k] = orig - eps;
            p.load_flat(&flat).unwrap();
            let dn = program_loss(&p);
            flat[k] = orig;
            let numeric = (up - dn) / (2.0 * eps);
            let a = analytic[k];
            let denom = (a.abs() + numeric.abs()).max(1e-8);
            assert!(
                (a - numeric).abs() <= 1e-7 || (a - numeric).abs() / denom < 1e-4,
                "param {k}: analytic {a} vs numeric {numeric}"
            );
            checked += 1;
        }
        p.load_flat(&flat).unwrap();
        assert_eq!(checked, p.n_params());
    }

    #[test]
    fn backward_matches_finite_differences_untied() {
        fd_check(small_params(false));
    }

    #[test]
    fn backward_matches_finite_differences_tied() {
        // Same program, but inverse relation rows are conjugate views, so
        // gradients through Relation(R + k) must fold onto forward row k.
        fd_check(small_params(true));
    }

    #[test]
    fn backward_is_deterministic() {
        let p = small_params(false);
        let run = || {
            let (t, seeds) = build_program(&p);
            let mut g = GradStore::zeros(&p);
            t.backward(&seeds, &mut g).unwrap();
            g.to_flat()
        };
        let (a, b) = (run(), run());
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(a.iter().any(|&x| x != 0.0), "program touches parameters");
    }

    #[test]
    fn collapsed_bundle_blocks_gradient_flow() {
        let p = small_params(false);
        let mut t = Tape::new(&p);
        let e = t.push(Op::Entity(1)).unwrap();
        let ne = t.push(Op::NegV(e)).unwrap();
        let na = t.push(Op::NormAdd(vec![e, ne])).unwrap(); // mean = 0 ⇒ collapsed
        assert!(t.value(na).iter().all(|&x| x == 0.0));
        let z = t.push(Op::Zeros(p.s())).unwrap();
        let sq = t.push(Op::SqDist { a: na, b: z }).unwrap();
        let mut g = GradStore::zeros(&p);
        t.backward(&[(sq, 1.0)], &mut g).unwrap();
        assert!(g.to_flat().iter().all(|&x| x == 0.0));
    }
}
