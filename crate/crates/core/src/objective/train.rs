use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{accumulate_gradient, loss_value, Adam, CombinedLoss, LossBreakdown, LossConfig, ScoreLoss};
use crate::data::{split_sequences, Catalog, SplitDataset, TrainingInstance};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, ModelRanker, RunMetadata};
use crate::model::{ModelConfig, ModelParameters};

/// Instances per gradient work unit. Fixed so the reduction order, and hence
/// the result, does not depend on the thread count.
const GRAD_CHUNK: usize = 8;

/// Which epoch's parameters [`train`] returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Best `F1(HR@10, ILD@10)` on validation.
    #[default]
    ValidationF1,
    /// Best `HR@10` on validation.
    ValidationHitRate,
    /// Parameters after the final epoch.
    LastEpoch,
}

/// One line of the training log. Epoch 0 describes the initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy_loss: f64,
    pub train_diversity_loss: f64,
    pub lambda: f64,
    pub val_hr10: Option<f64>,
    pub val_ild10: Option<f64>,
    pub val_f1_10: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParameters,
    pub log: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Trains with `L_acc + λ·L_div` from `loss_config`.
pub fn train(
    dataset: &SplitDataset,
    model_config: &ModelConfig,
    loss_config: &LossConfig,
) -> Result<TrainOutcome> {
    train_with(
        dataset,
        model_config,
        loss_config,
        &CombinedLoss::from(loss_config),
        None,
    )
}

/// Mini-batch Adam over shuffled prefixes with an arbitrary loss head. Each
/// epoch record is also written to `log_sink` as a JSON line as soon as the
/// epoch finishes.
pub fn train_with(
    dataset: &SplitDataset,
    model_config: &ModelConfig,
    loss_config: &LossConfig,
    head: &dyn ScoreLoss,
    mut log_sink: Option<&mut dyn Write>,
) -> Result<TrainOutcome> {
    loss_config.validate()?;
    model_config.validate()?;
    let catalog = &dataset.catalog;
    if model_config.vocab_size != catalog.item_count()
        || model_config.category_count != catalog.category_count()
    {
        return Err(Error::config(format!(
            "model sized for {} items / {} categories, catalog has {} / {}",
            model_config.vocab_size,
            model_config.category_count,
            catalog.item_count(),
            catalog.category_count()
        )));
    }
    let instances = split_sequences(&dataset.train);
    if instances.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let validation = split_sequences(&dataset.validation);
    let cutoff = 10.min(catalog.item_count());

    let mut params = ModelParameters::init(model_config)?;
    let mut adam = Adam::new(loss_config.learning_rate, &params);
    let mut rng = ChaCha8Rng::seed_from_u64(model_config.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut order: Vec<usize> = (0..instances.len()).collect();

    let mut log = Vec::with_capacity(loss_config.epochs + 1);
    let initial = mean_loss(head, &params, model_config, &instances, catalog)?;
    let record = epoch_record(0, initial, head.lambda(), &params, model_config, &validation, catalog, cutoff)?;
    emit(&mut log_sink, &record)?;
    log.push(record);

    let mut best: Option<(f64, usize, ModelParameters)> = None;
    for epoch in 1..=loss_config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = LossBreakdown::default();
        for (b, batch_idx) in order.chunks(loss_config.batch_size).enumerate() {
            let batch: Vec<&TrainingInstance> = batch_idx.iter().map(|&i| &instances[i]).collect();
            let weight = 1.0 / batch.len() as f64;
            let partials = batch
                .par_chunks(GRAD_CHUNK)
                .map(|chunk| {
                    let mut grad = params.zeros_like();
                    let mut parts = LossBreakdown::default();
                    for inst in chunk {
                        parts += accumulate_gradient(
                            head, &params, model_config, inst, catalog, weight, &mut grad,
                        )?;
                    }
                    Ok((parts, grad))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut partials = partials.into_iter();
            let (mut parts, mut grad) = partials.next().expect("non-empty batch");
            for (p, g) in partials {
                parts += p;
                grad.scaled_add(1.0, &g);
            }
            let parts = parts.scaled(weight);
            if !parts.total.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    loss: parts.total,
                });
            }
            if let Some(block) = grad.first_non_finite() {
                return Err(Error::NonFiniteGradient { block });
            }
            adam.step(&mut params, &grad);
            epoch_loss += parts.scaled(batch.len() as f64);
        }
        let epoch_loss = epoch_loss.scaled(1.0 / instances.len() as f64);
        let record = epoch_record(
            epoch,
            epoch_loss,
            head.lambda(),
            &params,
            model_config,
            &validation,
            catalog,
            cutoff,
        )?;
        emit(&mut log_sink, &record)?;

        let score = match loss_config.selection {
            Selection::ValidationF1 => record.val_f1_10,
            Selection::ValidationHitRate => record.val_hr10,
            Selection::LastEpoch => None,
        };
        log.push(record);
        let score = score.unwrap_or(epoch as f64);
        if best.as_ref().map_or(true, |(s, _, _)| score > *s) {
            best = Some((score, epoch, params.clone()));
        }
    }

    let (best_epoch, params) = match best {
        Some((_, e, p)) => (e, p),
        None => (0, params),
    };
    Ok(TrainOutcome {
        params,
        log,
        best_epoch,
    })
}

fn mean_loss(
    head: &dyn ScoreLoss,
    params: &ModelParameters,
    config: &ModelConfig,
    instances: &[TrainingInstance],
    catalog: &Catalog,
) -> Result<LossBreakdown> {
    let parts = instances
        .par_iter()
        .map(|inst| loss_value(head, params, config, inst, catalog))
        .collect::<Result<Vec<_>>>()?;
    let mut sum = LossBreakdown::default();
    for p in parts {
        sum += p;
    }
    Ok(sum.scaled(1.0 / instances.len() as f64))
}

#[allow(clippy::too_many_arguments)]
fn epoch_record(
    epoch: usize,
    loss: LossBreakdown,
    lambda: f64,
    params: &ModelParameters,
    config: &ModelConfig,
    validation: &[TrainingInstance],
    catalog: &Catalog,
    cutoff: usize,
) -> Result<EpochRecord> {
    let (hr, ild, f1) = if validation.is_empty() {
        (None, None, None)
    } else {
        let report = evaluate(
            &ModelRanker::new(params, config),
            validation,
            catalog,
            &[cutoff],
            &[],
            RunMetadata::default(),
        )?;
        let c = &report.cutoffs[0];
        (Some(c.hr), Some(c.ild), Some(c.f1))
    };
    Ok(EpochRecord {
        epoch,
        train_loss: loss.total,
        train_accuracy_loss: loss.accuracy,
        train_diversity_loss: loss.diversity,
        lambda,
        val_hr10: hr,
        val_ild10: ild,
        val_f1_10: f1,
    })
}

fn emit(sink: &mut Option<&mut dyn Write>, record: &EpochRecord) -> Result<()> {
    if let Some(w) = sink {
        let line = serde_json::to_string(record).expect("epoch record serializes");
        writeln!(w, "{line}")
            .and_then(|_| w.flush())
            .map_err(|e| Error::io("training log", e))?;
    }
    Ok(())
}
