//! The three-stage training curriculum on a synthetic graph: links, then
//! multi-hop composition, then negation — with checkpointing between stages.
//!
//! Stage 1 trains entity/relation tables on single links, stage 2 freezes
//! them and trains the projection MLPs on 2p/3p paths, stage 3 trains the
//! negation MLP on 2in queries.
//!
//! Run with: `cargo run --release --example curriculum`

use lvsa::config::Config;
use lvsa::encoder::ModelParams;
use lvsa::oracle::{sample_queries, SampleMode};
use lvsa::query::Tag;
use lvsa::synth::{gen_splits, SynthSpec};
use lvsa::trainer::{
    load_checkpoint, save_checkpoint, train_stage, TrainData, TrainState,
};

fn main() -> lvsa::Result<()> {
    let splits = gen_splits(&SynthSpec {
        n_entities: 60,
        n_relations: 4,
        degree: 6,
        valid_frac: 0.05,
        test_frac: 0.05,
        seed: 3,
    })?;

    let mut cfg = Config::default();
    cfg.d = 32;
    cfg.seed = 17;
    cfg.lr = 2e-3;
    cfg.batch_size = 64;
    cfg.epochs = 60;

    let params = ModelParams::init(
        cfg.d,
        splits.full.n_entities(),
        splits.full.n_forward_relations(),
        cfg.tie_inverse_conjugate,
        cfg.leaky_slope,
        cfg.seed,
    )?;
    let mut state = TrainState::new(params);
    let report = |stage: u8, stats: &lvsa::trainer::EpochStats| {
        if stats.epoch % 20 == 0 || stats.epoch == 1 {
            println!(
                "stage {stage} epoch {:>3}  loss {:.4}  ({} items)",
                stats.epoch, stats.mean_loss, stats.n_items
            );
        }
    };

    // Stage 1: every training triple (inverses included) is a 1p item.
    let d1 = TrainData::one_hop_from_triples(&splits.train)?;
    train_stage(&mut state, &d1, 1, &cfg, &mut |s, _| {
        report(1, s);
        true
    })?;

    // Stage 2: 2p/3p paths walked on the training graph; the in-batch
    // cross-entropy trains the chaining MLPs while the tables stay frozen.
    let mut paths = sample_queries(&splits, Tag::P2, 120, 19, SampleMode::Partial)?;
    paths.extend(sample_queries(&splits, Tag::P3, 120, 23, SampleMode::Partial)?);
    let d2 = TrainData::from_queries(paths);
    train_stage(&mut state, &d2, 2, &cfg, &mut |s, _| {
        report(2, s);
        true
    })?;

    // Stage 3: 2in queries; full-vocabulary cross-entropy plus the negated-
    // literal score term (α) and the double-negation consistency term (β).
    let neg = sample_queries(&splits, Tag::In2, 240, 29, SampleMode::Partial)?;
    let d3 = TrainData::from_queries(neg);
    let mut cfg3 = cfg.clone();
    cfg3.batch_size = 32;
    train_stage(&mut state, &d3, 3, &cfg3, &mut |s, _| {
        report(3, s);
        true
    })?;

    // Checkpoints carry parameters, Adam moments, stage, seed, and the label
    // vocabularies; loading resumes bit-exactly.
    let dir = std::env::temp_dir().join("lvsa_curriculum_example");
    std::fs::create_dir_all(&dir)?;
    let ckpt = dir.join("stage3.ckpt");
    save_checkpoint(
        &ckpt,
        &state,
        cfg.seed,
        splits.full.entities().labels(),
        &(0..splits.full.n_forward_relations())
            .map(|r| splits.full.relation_label(r))
            .collect::<Vec<_>>(),
    )?;
    let (loaded, meta) = load_checkpoint(&ckpt)?;
    println!(
        "\ncheckpoint: stage {} model, d = {}, {} entities, {} relations, seed {}",
        loaded.stage,
        loaded.params.d,
        meta.entity_labels.len(),
        meta.relation_labels.len(),
        meta.seed
    );
    assert_eq!(loaded.params.to_flat(), state.params.to_flat());
    println!("round trip is bit-exact; checkpoint at {}", ckpt.display());
    Ok(())
}
