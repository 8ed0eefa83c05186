//! Identical seeds and configurations reproduce identical runs.

mod common;

use common::checks;

#[test]
fn identical_runs_match_bitwise() {
    checks::determinism(21).unwrap();
}

#[test]
fn different_seeds_differ() {
    use sea_core::corpus::{generate_synthetic, synthetic_schema};
    use sea_core::train::train;
    let loss = |seed| {
        let (cfg, gen) = checks::determinism_config(seed);
        let docs = generate_synthetic(&gen, 5).unwrap();
        train(&docs, None, &synthetic_schema(&gen), &cfg, |_| {}).unwrap().first_step_loss.unwrap()
    };
    assert_ne!(loss(1).to_bits(), loss(2).to_bits());
}
