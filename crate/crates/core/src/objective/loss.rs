use std::f64::consts::LN_2;

use super::LossConfig;
use crate::data::Catalog;
use crate::error::{Error, Result};
use crate::model::ScoreVector;

/// Category probabilities obtained by summing item probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryDistribution {
    pub probabilities: Vec<f64>,
}

fn require_normalized(scores: &ScoreVector, catalog: &Catalog) -> Result<()> {
    if !scores.normalized {
        return Err(Error::config("loss requires softmax-normalized scores"));
    }
    if scores.len() != catalog.item_count() {
        return Err(Error::ShapeMismatch {
            name: "scores".into(),
            expected: vec![catalog.item_count()],
            found: vec![scores.len()],
        });
    }
    Ok(())
}

/// `P̂_c = Σ_{j : c(j) = c} P̂_j`, over the whole catalog.
pub fn category_distribution(scores: &ScoreVector, catalog: &Catalog) -> Result<CategoryDistribution> {
    require_normalized(scores, catalog)?;
    Ok(CategoryDistribution {
        probabilities: aggregate(&scores.scores, catalog),
    })
}

pub(crate) fn aggregate(probs: &[f64], catalog: &Catalog) -> Vec<f64> {
    let mut out = vec![0.0; catalog.category_count()];
    for (p, &c) in probs.iter().zip(catalog.item_to_category()) {
        out[c] += p;
    }
    out
}

/// `Σ_j p_j log2 max(p_j, ε)`, i.e. `−H(p)` in bits.
pub fn negative_entropy(probabilities: &[f64], epsilon: f64) -> f64 {
    // A single category whose mass rounds to 1 + ulp would otherwise come out
    // a few ulps above zero.
    probabilities
        .iter()
        .map(|&p| p * p.max(epsilon).log2())
        .sum::<f64>()
        .min(0.0)
}

/// `L_div = −H(P̂_c)`, in `[−log2 n, 0]`.
pub fn diversity_loss(scores: &ScoreVector, catalog: &Catalog, epsilon: f64) -> Result<f64> {
    let dist = category_distribution(scores, catalog)?;
    Ok(negative_entropy(&dist.probabilities, epsilon))
}

/// `−ln max(P̂_target, ε)`.
pub fn accuracy_loss(scores: &ScoreVector, target: usize, epsilon: f64) -> Result<f64> {
    if !scores.normalized {
        return Err(Error::config("loss requires softmax-normalized scores"));
    }
    let p = *scores.scores.get(target).ok_or(Error::IndexOutOfRange {
        what: "items",
        index: target,
        size: scores.len(),
    })?;
    Ok(-p.max(epsilon).ln())
}

/// Mean of [`accuracy_loss`] over a batch.
pub fn batch_accuracy_loss(batch: &[(ScoreVector, usize)], epsilon: f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let mut sum = 0.0;
    for (s, t) in batch {
        sum += accuracy_loss(s, *t, epsilon)?;
    }
    Ok(sum / batch.len() as f64)
}

/// `L = L_acc + λ·L_div`.
pub fn combined_loss(
    scores: &ScoreVector,
    target: usize,
    catalog: &Catalog,
    config: &LossConfig,
) -> Result<f64> {
    let acc = accuracy_loss(scores, target, config.epsilon)?;
    let div = diversity_loss(scores, catalog, config.epsilon)?;
    Ok(acc + config.lambda * div)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub accuracy: f64,
    pub diversity: f64,
    pub total: f64,
}

impl std::ops::AddAssign for LossBreakdown {
    fn add_assign(&mut self, rhs: Self) {
        self.accuracy += rhs.accuracy;
        self.diversity += rhs.diversity;
        self.total += rhs.total;
    }
}

impl LossBreakdown {
    pub fn scaled(self, factor: f64) -> Self {
        Self {
            accuracy: self.accuracy * factor,
            diversity: self.diversity * factor,
            total: self.total * factor,
        }
    }
}

/// A loss on the softmax output, with its gradient w.r.t. the logits.
pub trait ScoreLoss: Sync {
    /// `probs` is the softmax of the logits. Returns the loss parts and
    /// `∂L/∂logit_i` for every item.
    fn evaluate(&self, probs: &[f64], target: usize, catalog: &Catalog) -> (LossBreakdown, Vec<f64>);

    fn lambda(&self) -> f64;
}

/// Cross-entropy alone. `diversity` in the breakdown is still reported for
/// monitoring but never enters the loss or its gradient.
#[derive(Debug, Clone, Copy)]
pub struct AccuracyOnly {
    pub epsilon: f64,
}

/// `L_acc + λ·L_div`.
#[derive(Debug, Clone, Copy)]
pub struct CombinedLoss {
    pub lambda: f64,
    pub epsilon: f64,
}

impl From<&LossConfig> for CombinedLoss {
    fn from(c: &LossConfig) -> Self {
        Self {
            lambda: c.lambda,
            epsilon: c.epsilon,
        }
    }
}

fn cross_entropy_part(probs: &[f64], target: usize, epsilon: f64) -> (f64, Vec<f64>) {
    let pt = probs[target];
    let mut grad = vec![0.0; probs.len()];
    // Below the clamp the loss is constant in the logits.
    if pt > epsilon {
        grad.copy_from_slice(probs);
        grad[target] -= 1.0;
    }
    (-pt.max(epsilon).ln(), grad)
}

impl ScoreLoss for AccuracyOnly {
    fn evaluate(&self, probs: &[f64], target: usize, catalog: &Catalog) -> (LossBreakdown, Vec<f64>) {
        let (acc, grad) = cross_entropy_part(probs, target, self.epsilon);
        let div = negative_entropy(&aggregate(probs, catalog), self.epsilon);
        (
            LossBreakdown {
                accuracy: acc,
                diversity: div,
                total: acc,
            },
            grad,
        )
    }

    fn lambda(&self) -> f64 {
        0.0
    }
}

impl ScoreLoss for CombinedLoss {
    fn evaluate(&self, probs: &[f64], target: usize, catalog: &Catalog) -> (LossBreakdown, Vec<f64>) {
        let (acc, mut grad) = cross_entropy_part(probs, target, self.epsilon);
        let cats = aggregate(probs, catalog);
        let div = negative_entropy(&cats, self.epsilon);
        if self.lambda != 0.0 {
            // ∂L_div/∂P_c = log2 max(P_c, ε) + [P_c > ε]/ln 2, then through
            // the category sum and the softmax Jacobian.
            let g: Vec<f64> = cats
                .iter()
                .map(|&pc| {
                    let d = pc.max(self.epsilon).log2();
                    if pc > self.epsilon {
                        d + 1.0 / LN_2
                    } else {
                        d
                    }
                })
                .collect();
            let map = catalog.item_to_category();
            let mean: f64 = probs.iter().zip(map).map(|(p, &c)| p * g[c]).sum();
            for ((gi, p), &c) in grad.iter_mut().zip(probs).zip(map) {
                *gi += self.lambda * p * (g[c] - mean);
            }
        }
        (
            LossBreakdown {
                accuracy: acc,
                diversity: div,
                total: acc + self.lambda * div,
            },
            grad,
        )
    }

    fn lambda(&self) -> f64 {
        self.lambda
    }
}
