//! Accuracy (HR, MRR, NDCG), diversity (ILD, Entropy, DS) and the
//! generalized F_β composite, plus corpus-level evaluation.
//!
//! ILD uses binary category distance: two items are at distance 1 when their
//! categories differ and 0 otherwise, so ILD and DS both live in `[0, 1]`.

mod report;

pub use report::{
    evaluate, MetricsReport, ModelRanker, Ranker, RunMetadata, CutoffMetrics, ReportFile,
};

use crate::data::Catalog;
use crate::error::{Error, Result};

/// A top-N list of distinct item indices, best first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RecList {
    items: Vec<usize>,
}

impl RecList {
    pub fn new(items: Vec<usize>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::Empty("recommendation list"));
        }
        let mut sorted = items.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::malformed("recommendation list", "duplicate items"));
        }
        Ok(Self { items })
    }

    pub(crate) fn new_unchecked(items: Vec<usize>) -> Self {
        debug_assert!(Self::new(items.clone()).is_ok());
        Self { items }
    }

    pub fn items(&self) -> &[usize] {
        &self.items
    }

    /// The cutoff `N`.
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// 1-based rank of `item`, if present.
    pub fn rank_of(&self, item: usize) -> Option<usize> {
        self.items.iter().position(|&i| i == item).map(|p| p + 1)
    }

    fn category_counts(&self, catalog: &Catalog) -> Vec<usize> {
        let mut counts = vec![0usize; catalog.category_count()];
        for &i in &self.items {
            counts[catalog.category_of(i)] += 1;
        }
        counts
    }
}

pub fn hit_rate(rec: &RecList, target: usize) -> f64 {
    if rec.rank_of(target).is_some() {
        1.0
    } else {
        0.0
    }
}

pub fn mrr(rec: &RecList, target: usize) -> f64 {
    rec.rank_of(target).map_or(0.0, |r| 1.0 / r as f64)
}

/// Single relevant item, so the ideal DCG is 1.
pub fn ndcg(rec: &RecList, target: usize) -> f64 {
    rec.rank_of(target)
        .map_or(0.0, |r| 1.0 / ((r + 1) as f64).log2())
}

/// Mean pairwise category disagreement. Lists shorter than 2 have no pairs
/// and score 0 (with a warning).
pub fn ild(rec: &RecList, catalog: &Catalog) -> f64 {
    let n = rec.len();
    if n < 2 {
        log::warn!("ILD undefined for a list of length {n}; using 0");
        return 0.0;
    }
    let pairs = (n * (n - 1) / 2) as f64;
    let same: usize = rec
        .category_counts(catalog)
        .iter()
        .map(|&k| k * k.saturating_sub(1) / 2)
        .sum();
    (pairs - same as f64) / pairs
}

/// Base-2 entropy of the category frequencies in the list (not normalized).
pub fn entropy_metric(rec: &RecList, catalog: &Catalog) -> f64 {
    let n = rec.len() as f64;
    -rec.category_counts(catalog)
        .into_iter()
        .filter(|&k| k > 0)
        .map(|k| {
            let p = k as f64 / n;
            p * p.log2()
        })
        .sum::<f64>()
}

/// Distinct categories divided by list length.
pub fn diversity_score(rec: &RecList, catalog: &Catalog) -> f64 {
    let distinct = rec.category_counts(catalog).iter().filter(|&&k| k > 0).count();
    distinct as f64 / rec.len() as f64
}

/// `F_β = (1 + β²)·acc·div / (β²·acc + div)`; 0 when both inputs are 0.
pub fn f_beta(acc: f64, div: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::config(format!("beta must be positive, got {beta}")));
    }
    if acc < 0.0 || div < 0.0 {
        return Err(Error::config(format!(
            "F-score inputs must be non-negative, got ({acc}, {div})"
        )));
    }
    if acc == div {
        // F_β(x, x) = x exactly; the general formula can be off by an ulp.
        return Ok(acc);
    }
    let b2 = beta * beta;
    let denom = b2 * acc + div;
    Ok(if denom == 0.0 {
        0.0
    } else {
        (1.0 + b2) * acc * div / denom
    })
}
