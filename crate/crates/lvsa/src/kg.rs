//! Knowledge-graph triple store.
//!
//! Entities and relations are interned to dense 0-based ids. Relation ids
//! live in `[0, 2R)`: forward relations occupy `[0, R)` and each forward `r`
//! has a materialized inverse `r + R`, so "edges into t" are always "edges
//! out of t under an inverse relation". Every loaded triple `(h, r, t)` is
//! closed under inversion — `(t, inverse(r), h)` is inserted alongside it —
//! and duplicates collapse to one copy.
//!
//! A [`SplitGraphs`] stacks the three cumulative graphs used throughout:
//! `train`, `train ∪ valid`, and `train ∪ valid ∪ test` (the full graph).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub type EntityId = usize;
pub type RelationId = usize;
pub type Triple = (EntityId, RelationId, EntityId);

/// Reserved suffix for the printable labels of inverse relations.
/// Forward relation labels must not end with it.
pub const INVERSE_SUFFIX: &str = "⁻¹";

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

/// Label ↔ dense-id interning table. Ids are assigned in first-appearance
/// order, which makes vocabulary construction deterministic for a fixed
/// input file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocab {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Returns the id for `label`, interning it if unseen.
    pub fn intern(&mut self, label: &str) -> usize {
        if let Some(&id) = self.index.get(label) {
            return id;
        }
        let id = self.labels.len();
        self.labels.push(label.to_string());
        self.index.insert(label.to_string(), id);
        id
    }

    pub fn id(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, id: usize) -> &str {
        &self.labels[id]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Rebuilds a vocabulary from `(label, id)` pairs; ids must be exactly
    /// `0..n` with no duplicates.
    pub fn from_pairs(pairs: Vec<(String, usize)>) -> Result<Self> {
        let n = pairs.len();
        let mut labels = vec![String::new(); n];
        let mut seen = vec![false; n];
        for (label, id) in pairs {
            if id >= n {
                return Err(Error::Vocab(format!(
                    "id {id} out of range for vocabulary of {n} entries"
                )));
            }
            if seen[id] {
                return Err(Error::Vocab(format!("duplicate id {id} in vocabulary")));
            }
            seen[id] = true;
            labels[id] = label;
        }
        let mut v = Vocab::new();
        for label in labels {
            if v.index.contains_key(&label) {
                return Err(Error::Vocab(format!("duplicate label {label:?} in vocabulary")));
            }
            v.intern(&label);
        }
        Ok(v)
    }
}

// ---------------------------------------------------------------------------
// Knowledge graph
// ---------------------------------------------------------------------------

/// An immutable, inverse-closed triple store with dense ids.
#[derive(Debug, Clone)]
pub struct Kg {
    entities: Vocab,
    relations: Vocab, // forward labels; inverse ids are derived
    /// Sorted, deduplicated, inverse-closed triples.
    triples: Vec<Triple>,
    /// `(head, relation) -> sorted tail list`; exactly `triples` regrouped.
    out: HashMap<(EntityId, RelationId), Vec<EntityId>>,
    /// Per-head contiguous span in `triples` (sorted by head first).
    head_spans: Vec<(usize, usize)>,
}

impl Kg {
    /// Builds a graph from forward triples (relation ids `< R`). Inverse
    /// closure and duplicate collapsing happen here.
    pub fn from_triples(
        entities: Vocab,
        relations: Vocab,
        forward: impl IntoIterator<Item = Triple>,
    ) -> Result<Self> {
        let n_e = entities.len();
        let r_fwd = relations.len();
        let mut triples = Vec::new();
        for (h, r, t) in forward {
            if h >= n_e || t >= n_e {
                return Err(Error::Vocab(format!(
                    "entity id out of range in triple ({h}, {r}, {t}); vocabulary has {n_e} entities"
                )));
            }
            if r >= r_fwd {
                return Err(Error::Vocab(format!(
                    "relation id {r} out of range; vocabulary has {r_fwd} forward relations"
                )));
            }
            triples.push((h, r, t));
            triples.push((t, r + r_fwd, h));
        }
        triples.sort_unstable();
        triples.dedup();

        let mut out: HashMap<(EntityId, RelationId), Vec<EntityId>> = HashMap::new();
        for &(h, r, t) in &triples {
            out.entry((h, r)).or_default().push(t);
        }
        // Tails arrive sorted because `triples` is sorted by (h, r, t).

        let mut head_spans = vec![(0usize, 0usize); n_e];
        let mut i = 0;
        while i < triples.len() {
            let h = triples[i].0;
            let start = i;
            while i < triples.len() && triples[i].0 == h {
                i += 1;
            }
            head_spans[h] = (start, i);
        }

        Ok(Kg {
            entities,
            relations,
            triples,
            out,
            head_spans,
        })
    }

    pub fn n_entities(&self) -> usize {
        self.entities.len()
    }

    /// Number of forward relations `R`.
    pub fn n_forward_relations(&self) -> usize {
        self.relations.len()
    }

    /// Size of the full relation-id space, `2R`.
    pub fn n_relation_ids(&self) -> usize {
        self.relations.len() * 2
    }

    /// `inverse(r) = (r + R) mod 2R`; an involution.
    pub fn inverse(&self, r: RelationId) -> RelationId {
        let n = self.n_relation_ids();
        debug_assert!(r < n, "relation id {r} out of range {n}");
        (r + self.n_forward_relations()) % n
    }

    /// Sorted tails reachable from `h` via `r` (`r` may be an inverse id).
    pub fn neighbors(&self, h: EntityId, r: RelationId) -> &[EntityId] {
        self.out.get(&(h, r)).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn has_triple(&self, h: EntityId, r: RelationId, t: EntityId) -> bool {
        self.neighbors(h, r).binary_search(&t).is_ok()
    }

    /// The closed, sorted triple list (forward and inverse directions).
    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    /// Forward-direction triple count (the closed list is exactly twice it).
    pub fn n_forward_triples(&self) -> usize {
        self.triples.len() / 2
    }

    /// All out-edges of `e` (both directions), as a slice of the triple list.
    pub fn out_edges(&self, e: EntityId) -> &[Triple] {
        let (a, b) = self.head_spans[e];
        &self.triples[a..b]
    }

    pub fn entities(&self) -> &Vocab {
        &self.entities
    }

    pub fn relations(&self) -> &Vocab {
        &self.relations
    }

    pub fn entity_id(&self, label: &str) -> Result<EntityId> {
        self.entities
            .id(label)
            .ok_or_else(|| Error::Vocab(format!("unknown entity label {label:?}")))
    }

    pub fn entity_label(&self, id: EntityId) -> &str {
        self.entities.label(id)
    }

    /// Printable label for any relation id, deriving `label⁻¹` for inverses.
    pub fn relation_label(&self, r: RelationId) -> String {
        let r_fwd = self.n_forward_relations();
        if r < r_fwd {
            self.relations.label(r).to_string()
        } else {
            let mut s = self.relations.label(r - r_fwd).to_string();
            let _ = write!(s, "{INVERSE_SUFFIX}");
            s
        }
    }

    /// Resolves a relation label, accepting the reserved `⁻¹` suffix for
    /// inverse ids.
    pub fn relation_id(&self, label: &str) -> Result<RelationId> {
        if let Some(id) = self.relations.id(label) {
            return Ok(id);
        }
        if let Some(base) = label.strip_suffix(INVERSE_SUFFIX) {
            if let Some(id) = self.relations.id(base) {
                return Ok(id + self.n_forward_relations());
            }
        }
        Err(Error::Vocab(format!("unknown relation label {label:?}")))
    }
}

// ---------------------------------------------------------------------------
// Split stack
// ---------------------------------------------------------------------------

/// The cumulative graph stack: `train ⊆ train_valid ⊆ full`. All three share
/// one vocabulary, so entity/relation ids agree across splits.
#[derive(Debug, Clone)]
pub struct SplitGraphs {
    pub train: Kg,
    pub train_valid: Kg,
    pub full: Kg,
}

impl SplitGraphs {
    pub fn new(
        entities: Vocab,
        relations: Vocab,
        train: Vec<Triple>,
        valid: Vec<Triple>,
        test: Vec<Triple>,
    ) -> Result<Self> {
        let mut tv = train.clone();
        tv.extend_from_slice(&valid);
        let mut full = tv.clone();
        full.extend_from_slice(&test);
        Ok(SplitGraphs {
            train: Kg::from_triples(entities.clone(), relations.clone(), train)?,
            train_valid: Kg::from_triples(entities.clone(), relations.clone(), tv)?,
            full: Kg::from_triples(entities, relations, full)?,
        })
    }

    /// A stack whose three levels are all the same graph. Used where an
    /// operation wants a [`SplitGraphs`] but only one graph exists (latency
    /// probes, benchmarks).
    pub fn degenerate(kg: Kg) -> Self {
        SplitGraphs {
            train: kg.clone(),
            train_valid: kg.clone(),
            full: kg,
        }
    }
}

// ---------------------------------------------------------------------------
// TSV parsing and the on-disk layout
// ---------------------------------------------------------------------------

/// Parses a 3-column UTF-8 TSV of `head<TAB>relation<TAB>tail` label triples.
/// Fully empty lines are permitted (trailing newlines); anything else with a
/// column count ≠ 3 is a parse error carrying its 1-based line number.
pub fn parse_triples_tsv(path: &Path) -> Result<Vec<(String, String, String)>> {
    let text = std::fs::read_to_string(path)?;
    let shown = path.display().to_string();
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let (h, r, t) = match (cols.next(), cols.next(), cols.next(), cols.next()) {
            (Some(h), Some(r), Some(t), None) => (h, r, t),
            _ => {
                return Err(Error::parse(
                    &shown,
                    i + 1,
                    format!(
                        "expected 3 tab-separated columns, got {}",
                        line.split('\t').count()
                    ),
                ));
            }
        };
        if h.is_empty() || r.is_empty() || t.is_empty() {
            return Err(Error::parse(&shown, i + 1, "empty column"));
        }
        rows.push((h.to_string(), r.to_string(), t.to_string()));
    }
    Ok(rows)
}

fn check_relation_label(label: &str) -> Result<()> {
    if label.ends_with(INVERSE_SUFFIX) {
        return Err(Error::Vocab(format!(
            "relation label {label:?} ends with the reserved inverse suffix {INVERSE_SUFFIX:?}"
        )));
    }
    Ok(())
}

/// Resolves label rows to id triples. With `extend`, unseen labels are
/// interned (vocabulary construction); without it, unknown labels are
/// vocabulary errors (fixed-vocabulary loading).
fn resolve_rows(
    rows: &[(String, String, String)],
    entities: &mut Vocab,
    relations: &mut Vocab,
    extend: bool,
) -> Result<Vec<Triple>> {
    let mut out = Vec::with_capacity(rows.len());
    for (h, r, t) in rows {
        let (hi, ri, ti) = if extend {
            check_relation_label(r)?;
            (entities.intern(h), relations.intern(r), entities.intern(t))
        } else {
            let hi = entities
                .id(h)
                .ok_or_else(|| Error::Vocab(format!("unknown entity label {h:?}")))?;
            let ri = relations
                .id(r)
                .ok_or_else(|| Error::Vocab(format!("unknown relation label {r:?}")))?;
            let ti = entities
                .id(t)
                .ok_or_else(|| Error::Vocab(format!("unknown entity label {t:?}")))?;
            (hi, ri, ti)
        };
        out.push((hi, ri, ti));
    }
    Ok(out)
}

/// Reads raw split files, builds the union vocabulary (train triples first,
/// so train-split ids are stable regardless of valid/test content), and
/// returns the split stack. `valid`/`test` are optional.
pub fn ingest(train: &Path, valid: Option<&Path>, test: Option<&Path>) -> Result<SplitGraphs> {
    let train_rows = parse_triples_tsv(train)?;
    let valid_rows = valid.map(parse_triples_tsv).transpose()?.unwrap_or_default();
    let test_rows = test.map(parse_triples_tsv).transpose()?.unwrap_or_default();

    let mut entities = Vocab::new();
    let mut relations = Vocab::new();
    let train_ids = resolve_rows(&train_rows, &mut entities, &mut relations, true)?;
    let valid_ids = resolve_rows(&valid_rows, &mut entities, &mut relations, true)?;
    let test_ids = resolve_rows(&test_rows, &mut entities, &mut relations, true)?;

    SplitGraphs::new(entities, relations, train_ids, valid_ids, test_ids)
}

fn write_vocab(path: &Path, vocab: &Vocab) -> Result<()> {
    let mut s = String::new();
    for (id, label) in vocab.labels().iter().enumerate() {
        let _ = writeln!(s, "{label}\t{id}");
    }
    std::fs::write(path, s)?;
    Ok(())
}

fn read_vocab(path: &Path) -> Result<Vocab> {
    let text = std::fs::read_to_string(path)?;
    let shown = path.display().to_string();
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (label, id) = line
            .rsplit_once('\t')
            .ok_or_else(|| Error::parse(&shown, i + 1, "expected label<TAB>id"))?;
        let id: usize = id
            .parse()
            .map_err(|_| Error::parse(&shown, i + 1, format!("bad id {id:?}")))?;
        pairs.push((label.to_string(), id));
    }
    Vocab::from_pairs(pairs)
}

fn write_split_tsv(path: &Path, kg_labels: &SplitGraphs, triples: &[Triple]) -> Result<()> {
    let ents = kg_labels.full.entities();
    let rels = kg_labels.full.relations();
    let mut s = String::new();
    for &(h, r, t) in triples {
        let _ = writeln!(s, "{}\t{}\t{}", ents.label(h), rels.label(r), ents.label(t));
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// Serializes a split stack into a directory: `entities.tsv`/`relations.tsv`
/// vocabularies (`label<TAB>id`) plus `train.tsv`/`valid.tsv`/`test.tsv`.
/// Split files hold forward triples only (inverse closure is re-derived on
/// load) in sorted id order, so the output is canonical.
pub fn write_dir(dir: &Path, splits: &SplitGraphs) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_vocab(&dir.join("entities.tsv"), splits.full.entities())?;
    write_vocab(&dir.join("relations.tsv"), splits.full.relations())?;

    let fwd = |kg: &Kg| -> Vec<Triple> {
        let r = kg.n_forward_relations();
        kg.triples().iter().copied().filter(|&(_, rel, _)| rel < r).collect()
    };
    let train = fwd(&splits.train);
    let tv = fwd(&splits.train_valid);
    let full = fwd(&splits.full);
    let diff = |big: &[Triple], small: &[Triple]| -> Vec<Triple> {
        // Both sorted; set difference preserving order.
        let mut out = Vec::new();
        let mut j = 0;
        for &t in big {
            while j < small.len() && small[j] < t {
                j += 1;
            }
            if j < small.len() && small[j] == t {
                continue;
            }
            out.push(t);
        }
        out
    };
    write_split_tsv(&dir.join("train.tsv"), splits, &train)?;
    write_split_tsv(&dir.join("valid.tsv"), splits, &diff(&tv, &train))?;
    write_split_tsv(&dir.join("test.tsv"), splits, &diff(&full, &tv))?;
    Ok(())
}

/// Loads a directory written by [`write_dir`]: fixed vocabularies, then the
/// three split files resolved against them.
pub fn load_dir(dir: &Path) -> Result<SplitGraphs> {
    let mut entities = read_vocab(&dir.join("entities.tsv"))?;
    let mut relations = read_vocab(&dir.join("relations.tsv"))?;
    for label in relations.labels() {
        check_relation_label(label)?;
    }
    let mut load = |name: &str| -> Result<Vec<Triple>> {
        let rows = parse_triples_tsv(&dir.join(name))?;
        resolve_rows(&rows, &mut entities, &mut relations, false)
    };
    let train = load("train.tsv")?;
    let valid = load("valid.tsv")?;
    let test = load("test.tsv")?;
    SplitGraphs::new(entities, relations, train, valid, test)
}
