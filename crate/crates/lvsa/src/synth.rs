//! Seeded synthetic knowledge graphs.
//!
//! Generates a random multi-relational graph with a target out-degree per
//! entity, then splits the forward triples into train/valid/test. Everything
//! is driven by one seed, so a spec reproduces the same graph bit for bit on
//! any machine. Used by the scaling benchmark and anywhere a controlled
//! graph beats a real one (tests, examples, latency probes).

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::kg::{SplitGraphs, Triple, Vocab};
use crate::rng::seeded_rng;

/// RNG stream for edge generation (distinct from parameter-init streams).
const EDGE_STREAM: u64 = 0x4b47_4544; // "KGED"
/// RNG stream for the split shuffle.
const SPLIT_STREAM: u64 = 0x4b47_5350; // "KGSP"

/// Recipe for a synthetic graph.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_entities: usize,
    pub n_relations: usize,
    /// Edge draws per entity; collisions are deduplicated, so realized
    /// out-degree can fall slightly short.
    pub degree: usize,
    pub valid_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.n_entities < 2 {
            return Err(Error::Config(
                "synthetic graph needs at least 2 entities".into(),
            ));
        }
        if self.n_relations == 0 || self.degree == 0 {
            return Err(Error::Config(
                "synthetic graph needs at least 1 relation and degree ≥ 1".into(),
            ));
        }
        for (name, f) in [("valid_frac", self.valid_frac), ("test_frac", self.test_frac)] {
            if !f.is_finite() || f < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and ≥ 0")));
            }
        }
        if self.valid_frac + self.test_frac >= 1.0 {
            return Err(Error::Config(
                "valid_frac + test_frac must leave a non-empty train split".into(),
            ));
        }
        Ok(())
    }
}

/// Generates the graph described by `spec`. Entities are labeled `e0…`,
/// relations `r0…`. Per entity, `degree` edges are drawn with a uniform
/// relation and a uniform non-self target, then deduplicated. The forward
/// triples are shuffled and cut into test/valid/train by the requested
/// fractions (rounded down).
pub fn gen_splits(spec: &SynthSpec) -> Result<SplitGraphs> {
    spec.validate()?;
    let mut entities = Vocab::new();
    for i in 0..spec.n_entities {
        entities.intern(&format!("e{i}"));
    }
    let mut relations = Vocab::new();
    for i in 0..spec.n_relations {
        relations.intern(&format!("r{i}"));
    }

    let mut rng = seeded_rng(spec.seed, EDGE_STREAM);
    let mut edges = std::collections::BTreeSet::new();
    for h in 0..spec.n_entities {
        for _ in 0..spec.degree {
            let r = rng.gen_range(0..spec.n_relations);
            // Uniform over the n−1 non-self targets.
            let mut t = rng.gen_range(0..spec.n_entities - 1);
            if t >= h {
                t += 1;
            }
            edges.insert((h, r, t));
        }
    }
    let mut triples: Vec<Triple> = edges.into_iter().collect();

    let mut rng = seeded_rng(spec.seed, SPLIT_STREAM);
    triples.shuffle(&mut rng);
    let n = triples.len();
    let n_test = (spec.test_frac * n as f64).floor() as usize;
    let n_valid = (spec.valid_frac * n as f64).floor() as usize;
    let test = triples.split_off(n - n_test);
    let valid = triples.split_off(triples.len() - n_valid);
    let train = triples;
    if train.is_empty() {
        return Err(Error::Config("split fractions left no training triples".into()));
    }
    SplitGraphs::new(entities, relations, train, valid, test)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SynthSpec {
        SynthSpec {
            n_entities: 60,
            n_relations: 3,
            degree: 5,
            valid_frac: 0.05,
            test_frac: 0.05,
            seed: 42,
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = gen_splits(&spec()).unwrap();
        let b = gen_splits(&spec()).unwrap();
        assert_eq!(a.full.triples(), b.full.triples());
        assert_eq!(a.train.triples(), b.train.triples());
        assert_eq!(a.train_valid.triples(), b.train_valid.triples());
        assert_eq!(a.full.entities().labels(), b.full.entities().labels());
    }

    #[test]
    fn seeds_change_the_graph() {
        let a = gen_splits(&spec()).unwrap();
        let mut s = spec();
        s.seed = 43;
        let b = gen_splits(&s).unwrap();
        assert_ne!(a.full.triples(), b.full.triples());
    }

    #[test]
    fn shape_matches_spec() {
        let s = spec();
        let g = gen_splits(&s).unwrap();
        assert_eq!(g.full.n_entities(), s.n_entities);
        assert_eq!(g.full.n_forward_relations(), s.n_relations);
        let total = g.full.n_forward_triples();
        // Dedup can only lose edges; a 60-entity graph with 5 draws keeps most.
        assert!(total <= s.n_entities * s.degree);
        assert!(total >= s.n_entities * s.degree * 8 / 10, "total {total}");
        for &(h, r, t) in g.full.triples() {
            assert_ne!(h, t, "self loop");
            assert!(h < s.n_entities && t < s.n_entities);
            assert!(r < 2 * s.n_relations);
        }
        // Forward out-degree per head never exceeds the draw count.
        let mut deg = vec![0usize; s.n_entities];
        for &(h, r, _) in g.full.triples() {
            if r < s.n_relations {
                deg[h] += 1;
            }
        }
        assert!(deg.iter().all(|&d| d <= s.degree));
    }

    #[test]
    fn split_sizes_follow_fractions() {
        let s = spec();
        let g = gen_splits(&s).unwrap();
        let total = g.full.n_forward_triples();
        let want_each = (0.05 * total as f64).floor() as usize;
        let n_train = g.train.n_forward_triples();
        let n_tv = g.train_valid.n_forward_triples();
        assert_eq!(total - n_tv, want_each, "test size");
        assert_eq!(n_tv - n_train, want_each, "valid size");
        assert_eq!(n_train, total - 2 * want_each);
        // The stack is nested: every train triple is in train+valid etc.
        for &t in g.train.triples() {
            assert!(g.train_valid.has_triple(t.0, t.1, t.2));
            assert!(g.full.has_triple(t.0, t.1, t.2));
        }
    }

    #[test]
    fn bad_specs_are_rejected() {
        let mut s = spec();
        s.n_entities = 1;
        assert!(gen_splits(&s).is_err());
        let mut s = spec();
        s.degree = 0;
        assert!(gen_splits(&s).is_err());
        let mut s = spec();
        s.valid_frac = 0.6;
        s.test_frac = 0.5;
        assert!(gen_splits(&s).is_err());
        let mut s = spec();
        s.test_frac = f64::NAN;
        assert!(gen_splits(&s).is_err());
    }

    #[test]
    fn round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let g = gen_splits(&spec()).unwrap();
        crate::kg::write_dir(dir.path(), &g).unwrap();
        let h = crate::kg::load_dir(dir.path()).unwrap();
        assert_eq!(g.full.triples(), h.full.triples());
        assert_eq!(g.train.triples(), h.train.triples());
        assert_eq!(
            g.full.relations().labels(),
            h.full.relations().labels()
        );
    }
}
