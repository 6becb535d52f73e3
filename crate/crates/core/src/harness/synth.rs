//! Category-clustered Markov session generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{preprocess, InteractionRecord, PreprocessConfig, SplitDataset, DAY_SECS};
use crate::error::{Error, Result};

/// Seconds between consecutive clicks of a generated session.
const CLICK_GAP_SECS: i64 = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub item_count: usize,
    pub category_count: usize,
    pub session_count: usize,
    /// Inclusive session length range.
    pub min_len: usize,
    pub max_len: usize,
    /// Probability that the next click stays in the current category.
    pub p_stay: f64,
    pub seed: u64,
    /// Session start times are spread uniformly over this many days.
    pub span_days: i64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            item_count: 200,
            category_count: 10,
            session_count: 2000,
            min_len: 3,
            max_len: 10,
            p_stay: 0.9,
            seed: 7,
            span_days: 56,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.category_count < 2 {
            return Err(Error::config("synthetic data needs at least 2 categories"));
        }
        if self.item_count < self.category_count {
            return Err(Error::config(format!(
                "item_count ({}) must be at least category_count ({})",
                self.item_count, self.category_count
            )));
        }
        if !(0.0..=1.0).contains(&self.p_stay) {
            return Err(Error::config(format!("p_stay must be in [0, 1], got {}", self.p_stay)));
        }
        if self.min_len < 2 || self.min_len > self.max_len {
            return Err(Error::config(format!(
                "session length range {}..={} is empty or shorter than 2",
                self.min_len, self.max_len
            )));
        }
        if self.max_len > self.item_count {
            return Err(Error::config(format!(
                "max session length {} exceeds item_count {}",
                self.max_len, self.item_count
            )));
        }
        if self.session_count == 0 {
            return Err(Error::config("session_count must be positive"));
        }
        if self.span_days < 1 {
            return Err(Error::config("span_days must be at least 1"));
        }
        Ok(())
    }

    /// Category of item `i`: items are cut into `n` contiguous blocks whose
    /// sizes differ by at most one.
    pub fn category_of(&self, item: usize) -> usize {
        item * self.category_count / self.item_count
    }

    fn category_range(&self, category: usize) -> std::ops::Range<usize> {
        let (m, n) = (self.item_count, self.category_count);
        // Smallest i with i*n/m >= c.
        let start = |c: usize| (c * m).div_ceil(n);
        start(category)..start(category + 1)
    }
}

pub fn item_id(item: usize) -> String {
    format!("i{item:05}")
}

pub fn category_id(category: usize) -> String {
    format!("c{category:04}")
}

/// Draws the raw interaction log described by `spec`.
pub fn generate_records(spec: &SyntheticSpec) -> Result<Vec<InteractionRecord>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.category_count;
    let span = spec.span_days * DAY_SECS;
    let mut records = Vec::new();
    for s in 0..spec.session_count {
        let len = rng.random_range(spec.min_len..=spec.max_len);
        let start = rng.random_range(0..span);
        let mut category = rng.random_range(0..n);
        for k in 0..len {
            if k > 0 && !rng.random_bool(spec.p_stay) {
                // Uniform over the other n - 1 categories.
                let jump = rng.random_range(1..n);
                category = (category + jump) % n;
            }
            let item = rng.random_range(spec.category_range(category));
            records.push(InteractionRecord::new(
                format!("s{s:06}"),
                item_id(item),
                category_id(category),
                start + k as i64 * CLICK_GAP_SECS,
            ));
        }
    }
    Ok(records)
}

/// Generates a log and runs it through the standard preprocessing
/// (support 5, seven-day windows).
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SplitDataset> {
    let records = generate_records(spec)?;
    preprocess(&records, PreprocessConfig::default())
}
