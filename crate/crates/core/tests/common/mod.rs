//! Helpers shared by the integration test targets: brute-force metric
//! transcriptions, a finite-difference gradient checker and small fixtures.

#![allow(dead_code)]

use std::path::PathBuf;

use dcarec::model::ModelParameters;
use dcarec::objective::{combined_loss, gradient, CombinedLoss};
use dcarec::{model, Catalog, LossConfig, ModelConfig, TrainingInstance};
use rand::Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join("fixtures")
        .join(name)
}

/// Straight transcriptions of the metric definitions, written without
/// reference to the library's implementations.
pub mod oracle {
    pub fn hr(list: &[usize], target: usize) -> f64 {
        let mut hit = 0.0;
        for &i in list {
            if i == target {
                hit = 1.0;
            }
        }
        hit
    }

    pub fn mrr(list: &[usize], target: usize) -> f64 {
        for (k, &i) in list.iter().enumerate() {
            if i == target {
                return 1.0 / (k as f64 + 1.0);
            }
        }
        0.0
    }

    pub fn ndcg(list: &[usize], target: usize) -> f64 {
        for (k, &i) in list.iter().enumerate() {
            if i == target {
                return 1.0 / (k as f64 + 2.0).log2();
            }
        }
        0.0
    }

    pub fn ild(list: &[usize], cat: &[usize]) -> f64 {
        let n = list.len();
        if n < 2 {
            return 0.0;
        }
        let mut different = 0usize;
        for a in 0..n {
            for b in 0..n {
                if a != b && cat[list[a]] != cat[list[b]] {
                    different += 1;
                }
            }
        }
        different as f64 / (n * (n - 1)) as f64
    }

    pub fn entropy(list: &[usize], cat: &[usize]) -> f64 {
        let n = list.len() as f64;
        let mut seen: Vec<usize> = Vec::new();
        let mut h = 0.0;
        for &i in list {
            let c = cat[i];
            if seen.contains(&c) {
                continue;
            }
            seen.push(c);
            let k = list.iter().filter(|&&j| cat[j] == c).count() as f64;
            h -= (k / n) * (k / n).log2();
        }
        h
    }

    pub fn ds(list: &[usize], cat: &[usize]) -> f64 {
        let mut seen: Vec<usize> = list.iter().map(|&i| cat[i]).collect();
        seen.sort_unstable();
        seen.dedup();
        seen.len() as f64 / list.len() as f64
    }
}

/// Small random model, catalog and instances for gradient checks.
pub struct GradCase {
    pub config: ModelConfig,
    pub params: ModelParameters,
    pub catalog: Catalog,
    pub instance: TrainingInstance,
}

pub fn grad_case(rng: &mut impl Rng, mode: model::AttentionMode, seed: u64) -> GradCase {
    let m = 9;
    let n = 3;
    let map: Vec<usize> = (0..m).map(|i| i % n).collect();
    let catalog = Catalog::from_category_map(map.clone()).unwrap();
    let config = ModelConfig {
        embedding_dim: 3,
        hidden_dim: 4,
        attention_mode: mode,
        vocab_size: m,
        category_count: n,
        seed,
    };
    let mut params = ModelParameters::init(&config).unwrap();
    // Larger weights than the default init so saturation and the diversity
    // term both contribute visibly.
    params.scale(2.0);
    let len = rng.random_range(1..=4);
    let prefix: Vec<usize> = (0..len).map(|_| rng.random_range(0..m)).collect();
    let prefix_categories = prefix.iter().map(|&i| map[i]).collect();
    let instance = TrainingInstance {
        prefix,
        prefix_categories,
        target: rng.random_range(0..m),
    };
    GradCase {
        config,
        params,
        catalog,
        instance,
    }
}

fn full_loss(case: &GradCase, params: &ModelParameters, lambda: f64) -> f64 {
    let scores = model::forward_scores(
        &case.instance.prefix,
        &case.instance.prefix_categories,
        params,
        &case.config,
        true,
    )
    .unwrap();
    let cfg = LossConfig {
        lambda,
        ..LossConfig::default()
    };
    combined_loss(&scores, case.instance.target, &case.catalog, &cfg).unwrap()
}

/// Maximum relative error between the analytic gradient and central finite
/// differences over every parameter coordinate. The denominator is floored
/// at `floor` so coordinates with a vanishing gradient are judged by their
/// absolute error.
pub fn max_relative_error(case: &GradCase, lambda: f64, h: f64, floor: f64) -> f64 {
    let head = CombinedLoss {
        lambda,
        epsilon: LossConfig::default().epsilon,
    };
    let (_, analytic) = gradient(&head, &case.params, &case.config, &case.instance, &case.catalog)
        .unwrap();
    let analytic: Vec<Vec<f64>> = analytic
        .blocks()
        .into_iter()
        .map(|(_, b)| b.iter().copied().collect())
        .collect();

    let mut worst: f64 = 0.0;
    let mut probe = case.params.clone();
    for (b, block) in analytic.iter().enumerate() {
        for (k, &a) in block.iter().enumerate() {
            let original = coord(&mut probe, b, k, None);
            coord(&mut probe, b, k, Some(original + h));
            let up = full_loss(case, &probe, lambda);
            coord(&mut probe, b, k, Some(original - h));
            let down = full_loss(case, &probe, lambda);
            coord(&mut probe, b, k, Some(original));
            let numeric = (up - down) / (2.0 * h);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            worst = worst.max(rel);
        }
    }
    worst
}

fn coord(params: &mut ModelParameters, block: usize, k: usize, set: Option<f64>) -> f64 {
    let mut blocks = params.blocks_mut();
    let slot = blocks[block].1.iter_mut().nth(k).unwrap();
    let old = *slot;
    if let Some(v) = set {
        *slot = v;
    }
    old
}
