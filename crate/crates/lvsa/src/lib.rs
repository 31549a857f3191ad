//! Logic-constrained vector symbolic architecture (LVSA) for complex query
//! answering over knowledge graphs.
//!
//! The crate answers existential first-order queries with one free variable
//! (EFO₁, disjunctive normal form) by compiling each query's dependency graph
//! into a single complex-valued query vector — one constant-size sweep instead
//! of the exponential grounding enumeration a symbolic solver performs — and
//! scoring every entity against that vector.
//!
//! Module map:
//!
//! - [`kg`] — triple store with dense ids, inverse-relation closure, and the
//!   train/train+valid/full split stack.
//! - [`query`] — EFO₁ query graphs: JSONL parsing/serialization, the 14
//!   benchmark templates, node-role classification, topological ordering.
//! - [`oracle`] — exact symbolic answering (pruned and naive enumeration),
//!   easy/hard answer labeling, seeded query sampling, latency probes.
//! - [`vsa`] — the complex-vector algebra: binding, conjugation,
//!   magnitude-preserving bundling (`norm_add`), Hermitian scoring.
//! - [`nn`] — plain-`Vec<f64>` MLPs with LeakyReLU, seeded init, and Adam.
//! - [`tape`] — reverse-mode differentiation over the fixed encoder op set.
//! - [`encoder`] — the query encoder: model parameters, dependency-ordered
//!   embedding of query nodes, scoring, per-node traces, variable grounding.
//! - [`trainer`] — losses (cross-entropy, negation score, double-negation
//!   regularizer), the three-stage curriculum, checkpoint I/O.
//! - [`eval`] — filtered ranking metrics, report aggregation, interpretability
//!   probes, and the encoder-vs-oracle dichotomy benchmark.
//! - [`config`] — flat key-value run configuration.
//! - [`synth`] — seeded synthetic KG generation.
//! - [`cli`] — the `lvsa` binary's subcommand surface, kept thin.

pub mod cli;
pub mod config;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod kg;
pub mod nn;
pub mod oracle;
pub mod query;
pub(crate) mod rng;
pub mod synth;
pub mod tape;
pub mod trainer;
pub mod vsa;

pub use error::{Error, Result};
