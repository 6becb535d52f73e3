//! The attention-based session encoder/decoder.
//!
//! A GRU reads the item embeddings of a prefix, an additive attention unit
//! weights the hidden states against the last one, and the concatenation of
//! the last hidden state (global) with the attention-weighted sum (local) is
//! mapped through a bilinear decoder onto every item embedding.
//!
//! In [`AttentionMode::CategoryAware`] the category embedding of each item is
//! added to its hidden state inside the attention score only; the weighted sum
//! still runs over the untouched hidden states.

mod forward;
mod params;

pub use forward::{attend, decode, encode, forward_scores, EncoderState};
pub(crate) use forward::encode_traced;
pub use params::{load_checkpoint, save_checkpoint, ModelParameters, CHECKPOINT_FORMAT};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::RecList;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionMode {
    Standard,
    CategoryAware,
}

impl std::fmt::Display for AttentionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AttentionMode::Standard => "standard",
            AttentionMode::CategoryAware => "category_aware",
        })
    }
}

impl std::str::FromStr for AttentionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Self::Standard),
            "category_aware" | "category-aware" | "ca" => Ok(Self::CategoryAware),
            other => Err(Error::config(format!("unknown attention mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub attention_mode: AttentionMode,
    /// Number of items `m`.
    pub vocab_size: usize,
    /// Number of categories `n`.
    pub category_count: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(vocab_size: usize, category_count: usize) -> Self {
        Self {
            embedding_dim: 64,
            hidden_dim: 64,
            attention_mode: AttentionMode::Standard,
            vocab_size,
            category_count,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::config("embedding_dim and hidden_dim must be positive"));
        }
        if self.vocab_size == 0 {
            return Err(Error::config("vocab_size must be positive"));
        }
        if self.category_count == 0 {
            return Err(Error::config("category_count must be positive"));
        }
        Ok(())
    }
}

/// Relevance scores over the whole catalog for one prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub scores: Vec<f64>,
    /// Set once the scores have been passed through softmax.
    pub normalized: bool,
}

impl ScoreVector {
    pub fn raw(scores: Vec<f64>) -> Self {
        Self {
            scores,
            normalized: false,
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Softmax over all entries (a no-op on already normalized vectors).
    pub fn normalize(mut self) -> Self {
        if !self.normalized {
            softmax_in_place(&mut self.scores);
            self.normalized = true;
        }
        self
    }
}

pub(crate) fn softmax_in_place(x: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}

/// The `n` highest-scoring items, best first; equal scores go to the lower
/// item index.
pub fn recommend(scores: &ScoreVector, n: usize) -> Result<RecList> {
    let m = scores.len();
    if n == 0 || n > m {
        return Err(Error::config(format!(
            "list length {n} out of range 1..={m}"
        )));
    }
    let mut order: Vec<usize> = (0..m).collect();
    // Adding +0.0 maps -0.0 to +0.0 so signed zeros tie.
    let by_score = |&a: &usize, &b: &usize| {
        (scores.scores[b] + 0.0)
            .total_cmp(&(scores.scores[a] + 0.0))
            .then(a.cmp(&b))
    };
    if n < m {
        order.select_nth_unstable_by(n - 1, by_score);
        order.truncate(n);
    }
    order.sort_unstable_by(by_score);
    Ok(RecList::new_unchecked(order))
}
