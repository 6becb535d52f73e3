//! Shared fixtures for the benchmarks.

use dcarec::{AttentionMode, Catalog, ModelConfig, ModelParameters, ScoreVector, TrainingInstance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A randomly initialized model over a block-categorized catalog, plus
/// a batch of random training instances.
pub struct Fixture {
    pub catalog: Catalog,
    pub config: ModelConfig,
    pub params: ModelParameters,
    pub instances: Vec<TrainingInstance>,
}

impl Fixture {
    /// `m` items in `n` contiguous category blocks, `d`-dimensional model.
    pub fn new(m: usize, n: usize, d: usize, mode: AttentionMode, count: usize) -> Self {
        let catalog = Catalog::from_category_map((0..m).map(|i| i * n / m).collect())
            .expect("every block is non-empty when m >= n");
        let config = ModelConfig {
            embedding_dim: d,
            hidden_dim: d,
            attention_mode: mode,
            vocab_size: m,
            category_count: n,
            seed: 3,
        };
        let params = ModelParameters::init(&config).expect("valid config");
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let instances = (0..count)
            .map(|_| {
                let len = rng.random_range(1..10);
                let prefix: Vec<usize> = (0..len).map(|_| rng.random_range(0..m)).collect();
                TrainingInstance {
                    prefix_categories: prefix.iter().map(|&i| catalog.category_of(i)).collect(),
                    prefix,
                    target: rng.random_range(0..m),
                }
            })
            .collect();
        Self {
            catalog,
            config,
            params,
            instances,
        }
    }
}

/// Raw scores drawn uniformly from `[-1, 1)`.
pub fn random_scores(m: usize, seed: u64) -> ScoreVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ScoreVector::raw((0..m).map(|_| rng.random_range(-1.0..1.0)).collect())
}
