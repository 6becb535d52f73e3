mod common;

use common::{grad_case, max_relative_error};
use dcarec::AttentionMode;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn check(mode: AttentionMode, lambda: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for draw in 0..12 {
        let case = grad_case(&mut rng, mode, seed * 100 + draw);
        worst = worst.max(max_relative_error(&case, lambda, 1e-5, 1e-6));
    }
    assert!(worst < 1e-4, "{mode} λ={lambda}: max relative error {worst:e}");
}

#[test]
fn standard_accuracy_only() {
    check(AttentionMode::Standard, 0.0, 1);
}

#[test]
fn standard_with_diversity() {
    check(AttentionMode::Standard, 1.0, 2);
}

#[test]
fn category_aware_accuracy_only() {
    check(AttentionMode::CategoryAware, 0.0, 3);
}

#[test]
fn category_aware_with_diversity() {
    check(AttentionMode::CategoryAware, 1.0, 4);
}

#[test]
fn intermediate_lambda() {
    check(AttentionMode::CategoryAware, 0.37, 5);
}
