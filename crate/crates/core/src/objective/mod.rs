//! Training objective: cross-entropy accuracy loss, the category-entropy
//! diversity loss, their λ-weighted sum, exact gradients and the Adam
//! training loop.

mod adam;
mod grad;
mod loss;
mod train;

pub use adam::Adam;
pub use grad::{accumulate_gradient, gradient, loss_value};
pub use loss::{
    accuracy_loss, batch_accuracy_loss, category_distribution, combined_loss, diversity_loss,
    negative_entropy, AccuracyOnly, CategoryDistribution, CombinedLoss, LossBreakdown, ScoreLoss,
};
pub use train::{train, train_with, EpochRecord, Selection, TrainOutcome};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Weight of the diversity loss, in `[0, 1]`.
    pub lambda: f64,
    /// Lower clamp applied to probabilities inside logarithms.
    pub epsilon: f64,
    /// Adam step size.
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// How the returned parameters are picked among epochs.
    pub selection: Selection,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            epsilon: 1e-12,
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 10,
            selection: Selection::ValidationF1,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::config(format!(
                "lambda must be in [0, 1], got {}",
                self.lambda
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config("epsilon must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        Ok(())
    }
}
