//! Curriculum training: losses, the three-stage schedule, Adam state, and
//! binary checkpoints.
//!
//! The curriculum trains parameter blocks in isolation, freezing everything
//! else bit-for-bit (frozen blocks are skipped entirely — no decayed moments,
//! no zero-gradient updates):
//!
//! 1. **Stage 1** — embedding tables on single-hop queries built from the
//!    training triples (both directions), full-vocabulary softmax.
//! 2. **Stage 2** — independent/dependent projection MLPs on two- and
//!    three-hop path queries, softmax over the batch's answer union.
//! 3. **Stage 3** — the negation MLP on negated-intersection queries, with a
//!    full softmax plus two auxiliary terms: a score loss pushing negated
//!    literal vectors away from answers, and a consistency loss making
//!    negation behave like an involution (`¬¬x ≈ x`, `¬x ≈ −x`).
//!
//! Checkpoints serialize the complete [`TrainState`] (parameters, Adam
//! moments, stage) plus vocabulary labels, little-endian, with integrity
//! checks on load.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::encoder::{encode_query, push_lse_score, push_target_score};
use crate::error::{Error, Result};
use crate::kg::{EntityId, Kg};
use crate::nn::{adam_update, AdamHp, Linear, Mlp};
use crate::query::{classify, instantiate, QueryGraph, Tag};
use crate::rng::seeded_rng;
use crate::tape::{
    mlp_d_dims, mlp_i_dims, mlp_n_dims, Cands, GradStore, MlpSel, ModelParams, Op, Tape,
};
use crate::vsa::Table;

/// Upper bits of the RNG stream used for epoch shuffles; the low bits mix in
/// the stage and epoch so every (seed, stage, epoch) triple is independent.
const SHUFFLE_STREAM_BASE: u64 = 0x5348_5546 << 32;

// ---------------------------------------------------------------------------
// Training data
// ---------------------------------------------------------------------------

/// Queries plus one training item per (query, easy answer) pair. Hard
/// answers are never used as supervision — they are unreachable from the
/// training graph by construction.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub queries: Vec<QueryGraph>,
    /// `(query index, answer entity)` pairs.
    pub items: Vec<(usize, EntityId)>,
}

impl TrainData {
    /// One item per easy answer of each query.
    pub fn from_queries(queries: Vec<QueryGraph>) -> Self {
        let items = queries
            .iter()
            .enumerate()
            .flat_map(|(i, q)| q.easy.iter().map(move |&t| (i, t)))
            .collect();
        TrainData { queries, items }
    }

    /// Stage-1 data: one single-hop query per distinct `(head, relation)`
    /// pair of the graph — inverse directions included, so untied inverse
    /// embeddings receive direct supervision — with the neighbor set as easy
    /// answers and one item per triple.
    pub fn one_hop_from_triples(kg: &Kg) -> Result<Self> {
        let mut queries = Vec::new();
        let mut items = Vec::new();
        let triples = kg.triples();
        let mut i = 0;
        while i < triples.len() {
            let (h, r, _) = triples[i];
            let mut j = i;
            while j < triples.len() && triples[j].0 == h && triples[j].1 == r {
                j += 1;
            }
            let mut q = instantiate(Tag::P1, &[h], &[r])?;
            q.easy.extend(triples[i..j].iter().map(|t| t.2));
            let qi = queries.len();
            items.extend(triples[i..j].iter().map(|t| (qi, t.2)));
            queries.push(q);
            i = j;
        }
        Ok(TrainData { queries, items })
    }
}

/// Evaluation-style single-hop queries over a graph: per distinct
/// `(head, relation)` pair (inverses included), the neighbor set as *hard*
/// answers and nothing easy. Used by ranking sanity checks and benchmarks.
pub fn one_hop_eval_queries(kg: &Kg) -> Result<Vec<QueryGraph>> {
    let data = TrainData::one_hop_from_triples(kg)?;
    Ok(data
        .queries
        .into_iter()
        .map(|mut q| {
            q.hard = std::mem::take(&mut q.easy);
            q
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

fn stage_tags(stage: u8) -> &'static [Tag] {
    match stage {
        1 => &[Tag::P1],
        2 => &[Tag::P2, Tag::P3],
        3 => &[Tag::In2],
        _ => &[],
    }
}

/// Number of negation-MLP literal transforms in one query encoding.
fn negated_literal_count(q: &QueryGraph, n_forward_relations: usize) -> Result<usize> {
    let mut n = 0;
    for c in &q.disjuncts {
        n += classify(c, n_forward_relations)?.mlp_counts().2;
    }
    Ok(n)
}

/// Runs one batch: returns the batch loss and, when `grads` is given,
/// accumulates its exact gradient. This single code path serves training,
/// loss reporting, and the finite-difference checker.
///
/// Per item `(Q, t)` the cross-entropy term is
/// `−score(t) + ln Σ_{e∈cands} exp score(e)`, averaged over the batch.
/// Stage 2 restricts candidates to the batch answer union; other stages use
/// the full vocabulary. Stage 3 adds, per negated literal `x` with context
/// `c`:
/// `−(α/|B|)·ln σ(⟨MLP_N(c⊕x), φ(t)⟩)` and
/// `(β/M)·(‖MLP_N(c⊕MLP_N(c⊕x)) − x‖² + ‖MLP_N(c⊕x) + x‖²)`,
/// `M` the number of negated literals across the batch.
pub fn batch_pass(
    params: &ModelParams,
    queries: &[QueryGraph],
    batch: &[(usize, EntityId)],
    stage: u8,
    cfg: &Config,
    mut grads: Option<&mut GradStore>,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    let bw = 1.0 / batch.len() as f64;
    let cands = if stage == 2 {
        let mut union: Vec<EntityId> = batch.iter().map(|&(_, t)| t).collect();
        union.sort_unstable();
        union.dedup();
        Cands::Set(union)
    } else {
        Cands::All
    };
    // Total negated-literal transforms in the batch (normalizes the
    // consistency loss); known before any tape is built.
    let mut m_lits = 0usize;
    if stage == 3 {
        for &(qi, _) in batch {
            m_lits += negated_literal_count(&queries[qi], params.n_forward_relations)?;
        }
    }

    let mut loss = 0.0;
    for &(qi, t) in batch {
        let q = &queries[qi];
        let mut tape = Tape::new(params);
        let enc = encode_query(&mut tape, q)?;
        let mut seeds = Vec::new();

        let s_t = push_target_score(&mut tape, &enc, t)?;
        let lse = push_lse_score(&mut tape, &enc, cands.clone())?;
        loss += bw * (tape.scalar(lse) - tape.scalar(s_t));
        seeds.push((s_t, -bw));
        seeds.push((lse, bw));

        if stage == 3 {
            let apps: Vec<_> = enc.neg_apps().copied().collect();
            for app in apps {
                // Score term: negated literal vectors should score answers low.
                let sc = tape.push(Op::MaxDot { qs: vec![app.out], target: t })?;
                let ls = tape.push(Op::LogSigmoid(sc))?;
                loss += -cfg.alpha * bw * tape.scalar(ls);
                seeds.push((ls, -cfg.alpha * bw));
                // Consistency terms, sharing the recorded context.
                let w = cfg.beta / m_lits as f64;
                let cat2 = tape.push(Op::Concat(vec![app.ctx, app.out]))?;
                let double = tape.push(Op::Mlp { sel: MlpSel::N, x: cat2 })?;
                let t1 = tape.push(Op::SqDist { a: double, b: app.raw })?;
                let neg_raw = tape.push(Op::NegV(app.raw))?;
                let t2 = tape.push(Op::SqDist { a: app.out, b: neg_raw })?;
                loss += w * (tape.scalar(t1) + tape.scalar(t2));
                seeds.push((t1, w));
                seeds.push((t2, w));
            }
        }
        if let Some(g) = grads.as_deref_mut() {
            tape.backward(&seeds, g)?;
        }
    }
    Ok(loss)
}

// ---------------------------------------------------------------------------
// Optimizer state and the stage loop
// ---------------------------------------------------------------------------

/// Adam moments over the canonical flat parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn zeros(n: usize) -> Self {
        AdamState {
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// A model mid-curriculum: parameters, optimizer moments, and the highest
/// completed stage (0 = freshly initialized).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: ModelParams,
    pub adam: AdamState,
    pub stage: u8,
}

impl TrainState {
    pub fn new(params: ModelParams) -> Self {
        let n = params.n_params();
        TrainState {
            params,
            adam: AdamState::zeros(n),
            stage: 0,
        }
    }
}

/// Per-epoch progress passed to the caller's callback.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Item-weighted mean of batch losses.
    pub mean_loss: f64,
    pub n_items: usize,
}

/// Parameter blocks trained by each stage (everything else stays frozen).
fn stage_block_ranges(params: &ModelParams, stage: u8) -> Vec<std::ops::Range<usize>> {
    let r = params.block_ranges();
    match stage {
        1 => vec![r.entities, r.relations],
        2 => vec![r.mlp_i, r.mlp_d],
        3 => vec![r.mlp_n],
        _ => Vec::new(),
    }
}

/// Trains one curriculum stage in place. `state.stage` must be exactly
/// `stage − 1`. The callback runs after every epoch; returning `false` stops
/// early. On return `state.stage == stage`.
pub fn train_stage(
    state: &mut TrainState,
    data: &TrainData,
    stage: u8,
    cfg: &Config,
    on_epoch: &mut dyn FnMut(&EpochStats, &TrainState) -> bool,
) -> Result<()> {
    if !(1..=3).contains(&stage) {
        return Err(Error::Config(format!("no curriculum stage {stage}")));
    }
    if state.stage != stage - 1 {
        return Err(Error::Config(format!(
            "stage {stage} requires a model trained through stage {} (checkpoint is at stage {})",
            stage - 1,
            state.stage
        )));
    }
    if data.items.is_empty() {
        return Err(Error::Data("no training items".into()));
    }
    let allowed = stage_tags(stage);
    for q in &data.queries {
        if !q.tag.is_some_and(|t| allowed.contains(&t)) {
            let names: Vec<&str> = allowed.iter().map(|t| t.as_str()).collect();
            return Err(Error::Data(format!(
                "stage {stage} trains on {} queries; got {:?}",
                names.join("/"),
                q.tag.map(|t| t.as_str().to_string())
            )));
        }
    }

    let blocks = stage_block_ranges(&state.params, stage);
    let hp = AdamHp {
        lr: cfg.lr,
        ..AdamHp::default()
    };
    for epoch_idx in 0..cfg.epochs {
        let stream =
            SHUFFLE_STREAM_BASE | ((stage as u64) << 24) | (epoch_idx as u64 & 0xff_ffff);
        let mut order: Vec<usize> = (0..data.items.len()).collect();
        order.shuffle(&mut seeded_rng(cfg.seed, stream));

        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(usize, EntityId)> = chunk.iter().map(|&i| data.items[i]).collect();
            let mut grads = GradStore::zeros(&state.params);
            let loss = batch_pass(
                &state.params,
                &data.queries,
                &batch,
                stage,
                cfg,
                Some(&mut grads),
            )?;
            loss_sum += loss * batch.len() as f64;

            let mut flat = state.params.to_flat();
            let gflat = grads.to_flat();
            state.adam.step += 1;
            for r in &blocks {
                let r = r.clone();
                if cfg.l2 > 0.0 {
                    let mut gb = gflat[r.clone()].to_vec();
                    for (g, p) in gb.iter_mut().zip(&flat[r.clone()]) {
                        *g += cfg.l2 * p;
                    }
                    adam_update(
                        &mut flat[r.clone()],
                        &gb,
                        &mut state.adam.m[r.clone()],
                        &mut state.adam.v[r],
                        state.adam.step,
                        &hp,
                    );
                } else {
                    adam_update(
                        &mut flat[r.clone()],
                        &gflat[r.clone()],
                        &mut state.adam.m[r.clone()],
                        &mut state.adam.v[r],
                        state.adam.step,
                        &hp,
                    );
                }
            }
            state.params.load_flat(&flat)?;
        }
        let stats = EpochStats {
            epoch: epoch_idx + 1,
            mean_loss: loss_sum / data.items.len() as f64,
            n_items: data.items.len(),
        };
        if !on_epoch(&stats, state) {
            break;
        }
    }
    state.stage = stage;
    Ok(())
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

const MAGIC: &[u8; 4] = b"LVSA";
const VERSION: u32 = 1;
const FLAG_ADAM: u32 = 1;
const FLAG_TIE_INVERSE: u32 = 2;

/// JSON metadata stored at the end of a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CkptMeta {
    pub stage: u8,
    pub seed: u64,
    pub entity_labels: Vec<String>,
    /// Forward relation labels only; inverse labels are derived.
    pub relation_labels: Vec<String>,
}

fn push_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_f64s(buf: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    origin: String,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format(format!(
                "{}: unexpected end of file at byte {}",
                self.origin, self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Serializes a checkpoint: fixed header, layer shapes, parameter arrays in
/// canonical order, Adam moments, then length-prefixed JSON metadata. The
/// write is atomic (temp file + rename).
pub fn save_checkpoint(
    path: &Path,
    state: &TrainState,
    seed: u64,
    entity_labels: &[String],
    relation_labels: &[String],
) -> Result<()> {
    let p = &state.params;
    if entity_labels.len() != p.n_entities() {
        return Err(Error::Data(format!(
            "{} entity labels for {} embeddings",
            entity_labels.len(),
            p.n_entities()
        )));
    }
    if relation_labels.len() != p.n_forward_relations {
        return Err(Error::Data(format!(
            "{} relation labels for {} forward relations",
            relation_labels.len(),
            p.n_forward_relations
        )));
    }
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    push_u32(&mut buf, VERSION);
    push_u32(&mut buf, 64);
    let mut flags = FLAG_ADAM;
    if p.tie_inverse {
        flags |= FLAG_TIE_INVERSE;
    }
    push_u32(&mut buf, flags);
    push_u32(&mut buf, p.d as u32);
    push_f64s(&mut buf, &[p.leaky_slope]);
    push_u64(&mut buf, p.n_entities() as u64);
    push_u64(&mut buf, p.relations.rows() as u64);
    push_u32(&mut buf, 3);
    for mlp in [&p.mlp_i, &p.mlp_d, &p.mlp_n] {
        let dims = mlp.dims();
        push_u32(&mut buf, dims.len() as u32);
        for (i, o) in dims {
            push_u32(&mut buf, i as u32);
            push_u32(&mut buf, o as u32);
        }
    }
    push_f64s(&mut buf, &p.to_flat());
    push_u64(&mut buf, state.adam.step);
    push_f64s(&mut buf, &state.adam.m);
    push_f64s(&mut buf, &state.adam.v);
    let meta = CkptMeta {
        stage: state.stage,
        seed,
        entity_labels: entity_labels.to_vec(),
        relation_labels: relation_labels.to_vec(),
    };
    let json = serde_json::to_vec(&meta)?;
    push_u64(&mut buf, json.len() as u64);
    buf.extend_from_slice(&json);

    let tmp = path.with_extension("ckpt.tmp");
    std::fs::write(&tmp, &buf)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads a checkpoint back, validating magic, version, float width, layer
/// shapes, finiteness of every stored value, and that no bytes trail the
/// metadata.
pub fn load_checkpoint(path: &Path) -> Result<(TrainState, CkptMeta)> {
    let buf = std::fs::read(path)?;
    let origin = path.display().to_string();
    let mut r = Reader {
        buf: &buf,
        pos: 0,
        origin: origin.clone(),
    };
    if r.take(4)? != MAGIC {
        return Err(Error::Format(format!("{origin}: not a checkpoint file")));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "{origin}: unsupported checkpoint version {version}"
        )));
    }
    let width = r.u32()?;
    if width != 64 {
        return Err(Error::Format(format!(
            "{origin}: unsupported float width {width}"
        )));
    }
    let flags = r.u32()?;
    let d = r.u32()? as usize;
    let leaky_slope = r.f64()?;
    let n_entities = r.u64()? as usize;
    let rel_rows = r.u64()? as usize;
    let tie_inverse = flags & FLAG_TIE_INVERSE != 0;
    let n_forward_relations = if tie_inverse {
        rel_rows
    } else {
        if rel_rows % 2 != 0 {
            return Err(Error::Integrity(format!(
                "{origin}: untied relation table has odd row count {rel_rows}"
            )));
        }
        rel_rows / 2
    };
    let n_mlps = r.u32()?;
    if n_mlps != 3 {
        return Err(Error::Integrity(format!(
            "{origin}: expected 3 projection networks, found {n_mlps}"
        )));
    }
    let mut all_dims = Vec::new();
    for _ in 0..3 {
        let n_layers = r.u32()? as usize;
        let mut dims = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            dims.push((r.u32()? as usize, r.u32()? as usize));
        }
        all_dims.push(dims);
    }
    for (got, want) in all_dims
        .iter()
        .zip([mlp_i_dims(d), mlp_d_dims(d), mlp_n_dims(d)])
    {
        if *got != want {
            return Err(Error::Integrity(format!(
                "{origin}: stored layer shapes {got:?} do not match dimension {d}"
            )));
        }
    }
    let mlp_of = |dims: &[(usize, usize)]| Mlp {
        layers: dims.iter().map(|&(i, o)| Linear::zeros(i, o)).collect(),
    };
    let mut params = ModelParams {
        d,
        leaky_slope,
        tie_inverse,
        n_forward_relations,
        entities: Table::zeros(n_entities, d),
        relations: Table::zeros(rel_rows, d),
        mlp_i: mlp_of(&all_dims[0]),
        mlp_d: mlp_of(&all_dims[1]),
        mlp_n: mlp_of(&all_dims[2]),
    };
    let n_params = params.n_params();
    let flat = r.f64s(n_params)?;
    params.load_flat(&flat)?;
    params.validate()?;

    let adam = if flags & FLAG_ADAM != 0 {
        AdamState {
            step: r.u64()?,
            m: r.f64s(n_params)?,
            v: r.f64s(n_params)?,
        }
    } else {
        AdamState::zeros(n_params)
    };
    for (name, arr) in [("parameters", &flat), ("moments", &adam.m), ("moments", &adam.v)] {
        if arr.iter().any(|x| !x.is_finite()) {
            return Err(Error::Integrity(format!(
                "{origin}: non-finite value among stored {name}"
            )));
        }
    }
    let meta_len = r.u64()? as usize;
    let meta: CkptMeta = serde_json::from_slice(r.take(meta_len)?)?;
    if r.pos != buf.len() {
        return Err(Error::Format(format!(
            "{origin}: {} trailing bytes after metadata",
            buf.len() - r.pos
        )));
    }
    if meta.entity_labels.len() != n_entities
        || meta.relation_labels.len() != n_forward_relations
    {
        return Err(Error::Integrity(format!(
            "{origin}: label counts disagree with table sizes"
        )));
    }
    let stage = meta.stage;
    Ok((
        TrainState {
            params,
            adam,
            stage,
        },
        meta,
    ))
}
