//! Ablation and λ-sweep orchestration.
//!
//! Layout of a run directory:
//!
//! ```text
//! <run>/config.toml                 resolved configuration
//! <run>/dataset/                    the synthetic dataset, when generated
//! <run>/variants/<key>/             one directory per ablation arm
//!     train_log.jsonl  checkpoint.json  report.json  report.txt
//! <run>/sweep/lambda_<λ>/           one directory per sweep point
//! <run>/summary.json                per-arm status (ablation)
//! <run>/sweep.json                  per-λ metric curves (sweep)
//! <run>/comparison.txt|json         rendered comparison table
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Variant};
use super::render::render_report;
use super::synth::generate_records;
use crate::data::{
    load_dataset, preprocess, split_sequences, write_dataset, DatasetManifest, PreprocessConfig,
    SplitDataset,
};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, MetricsReport, ModelRanker, RunMetadata};
use crate::model::{save_checkpoint, AttentionMode, ModelConfig, ModelParameters};
use crate::objective::{train_with, CombinedLoss, LossConfig, TrainOutcome};
use crate::rerank::MmrConfig;

/// Loads `dataset.path`, or generates the synthetic dataset and, when
/// `write_to` is given, stores it there.
pub fn experiment_dataset(config: &ExperimentConfig, write_to: Option<&Path>) -> Result<SplitDataset> {
    if let Some(path) = &config.dataset.path {
        return Ok(load_dataset(path)?.0);
    }
    let records = generate_records(&config.synthetic)?;
    let pre = PreprocessConfig::default();
    let dataset = preprocess(&records, pre)?;
    if let Some(dir) = write_to {
        let mut manifest = DatasetManifest::describe(&dataset, "synthetic", pre, records.len(), 0);
        manifest.generator = Some(
            serde_json::to_value(&config.synthetic).expect("synthetic spec serializes"),
        );
        write_dataset(dir, &dataset, &manifest)?;
    }
    Ok(dataset)
}

/// Status of one ablation arm or sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub name: String,
    pub directory: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ArmResult {
    pub summary: ArmSummary,
    pub report: Option<MetricsReport>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub directory: PathBuf,
    pub arms: Vec<(Variant, ArmResult)>,
}

impl ExperimentOutcome {
    pub fn report(&self, variant: Variant) -> Option<&MetricsReport> {
        self.arms
            .iter()
            .find(|(v, _)| *v == variant)
            .and_then(|(_, a)| a.report.as_ref())
    }
}

/// Per-λ curves plus the rank correlation between λ and ILD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub attention: AttentionMode,
    pub lambdas: Vec<f64>,
    /// `metric@N → value per λ`; `null` where that point failed.
    pub curves: BTreeMap<String, Vec<Option<f64>>>,
    /// Cutoff used for the trend statistic.
    pub trend_cutoff: usize,
    /// Spearman correlation between λ and ILD at `trend_cutoff`, over the
    /// points that succeeded.
    pub spearman_lambda_ild: Option<f64>,
    pub points: Vec<ArmSummary>,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub directory: PathBuf,
    pub summary: SweepSummary,
    pub reports: Vec<Option<MetricsReport>>,
}

/// Everything needed to train and score one arm.
struct Arm<'a> {
    name: String,
    dir: PathBuf,
    attention: AttentionMode,
    lambda: f64,
    mmr: Option<MmrConfig>,
    dataset: &'a SplitDataset,
    config: &'a ExperimentConfig,
}

/// Trained models keyed by (attention, λ bits), with the log they produced.
type TrainCache = HashMap<(AttentionMode, u64), (ModelConfig, ModelParameters, usize, PathBuf)>;

impl Arm<'_> {
    fn model_config(&self) -> ModelConfig {
        ModelConfig {
            embedding_dim: self.config.model.embedding_dim,
            hidden_dim: self.config.model.hidden_dim,
            attention_mode: self.attention,
            vocab_size: self.dataset.catalog.item_count(),
            category_count: self.dataset.catalog.category_count(),
            seed: self.config.seed,
        }
    }

    fn loss_config(&self) -> LossConfig {
        LossConfig {
            lambda: self.lambda,
            ..self.config.loss.clone()
        }
    }

    /// Trains (or reuses an identical, already trained model), writes the
    /// log and checkpoint, evaluates on test and writes the report.
    fn run(&self, cache: &mut TrainCache) -> Result<(MetricsReport, usize)> {
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let key = (self.attention, self.lambda.to_bits());
        let log_path = self.dir.join("train_log.jsonl");
        let (model_config, params, best_epoch, _) = match cache.get(&key) {
            Some(hit) => {
                info!("{}: reusing the model trained for an identical arm", self.name);
                fs::copy(&hit.3, &log_path).map_err(|e| Error::io(&log_path, e))?;
                hit.clone()
            }
            None => {
                let model_config = self.model_config();
                let loss_config = self.loss_config();
                let file = File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
                let mut sink = BufWriter::new(file);
                let head = CombinedLoss::from(&loss_config);
                let TrainOutcome {
                    params, best_epoch, ..
                } = train_with(self.dataset, &model_config, &loss_config, &head, Some(&mut sink))?;
                let entry = (model_config, params, best_epoch, log_path.clone());
                cache.insert(key, entry.clone());
                entry
            }
        };
        save_checkpoint(&self.dir.join("checkpoint.json"), &model_config, &params)?;

        let test = split_sequences(&self.dataset.test);
        let ranker = ModelRanker::new(&params, &model_config);
        let ranker = match &self.mmr {
            Some(m) => ranker.with_mmr(&self.dataset.catalog, m.clone()),
            None => ranker,
        };
        let metadata = RunMetadata {
            model_id: self.name.clone(),
            lambda: self.lambda,
            seed: self.config.seed,
            attention: self.attention.to_string(),
        };
        let report = evaluate(
            &ranker,
            &test,
            &self.dataset.catalog,
            &self.config.cutoffs,
            &self.config.betas,
            metadata,
        )?;
        report.write(&self.dir)?;
        Ok((report, best_epoch))
    }

    fn run_recorded(&self, cache: &mut TrainCache, root: &Path) -> ArmResult {
        let directory = self
            .dir
            .strip_prefix(root)
            .unwrap_or(&self.dir)
            .display()
            .to_string();
        match self.run(cache) {
            Ok((report, best_epoch)) => ArmResult {
                summary: ArmSummary {
                    name: self.name.clone(),
                    directory,
                    ok: true,
                    error: None,
                    best_epoch: Some(best_epoch),
                },
                report: Some(report),
            },
            Err(e) => {
                warn!("{} failed: {e}", self.name);
                let _ = fs::write(self.dir.join("error.txt"), format!("{e}\n"));
                ArmResult {
                    summary: ArmSummary {
                        name: self.name.clone(),
                        directory,
                        ok: false,
                        error: Some(e.to_string()),
                        best_epoch: None,
                    },
                    report: None,
                }
            }
        }
    }
}

fn prepare_run_dir(config: &ExperimentConfig, run_dir: &Path) -> Result<SplitDataset> {
    config.validate()?;
    fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
    let cfg_path = run_dir.join("config.toml");
    fs::write(&cfg_path, config.to_toml()).map_err(|e| Error::io(&cfg_path, e))?;
    let dataset_dir = run_dir.join("dataset");
    experiment_dataset(config, config.dataset.path.is_none().then_some(dataset_dir.as_path()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_owned(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Trains and evaluates every configured variant under the shared seed.
///
/// A failing variant is recorded (in `summary.json` and its own
/// `error.txt`) and the remaining variants still run. Errors are returned
/// only for problems that affect the whole run, such as an invalid config or
/// an unreadable dataset.
pub fn run_experiment(config: &ExperimentConfig, run_dir: &Path) -> Result<ExperimentOutcome> {
    let dataset = prepare_run_dir(config, run_dir)?;
    let mut cache = TrainCache::new();
    let mut arms = Vec::new();
    for &variant in &config.variants {
        let arm = Arm {
            name: variant.label().to_owned(),
            dir: run_dir.join("variants").join(variant.key()),
            attention: variant.attention(),
            lambda: if variant.uses_diversity_loss() {
                config.loss.lambda
            } else {
                0.0
            },
            mmr: (variant == Variant::Mmr).then(|| MmrConfig {
                lambda: config.mmr.lambda,
                pool_size: config.mmr.pool_size.min(dataset.catalog.item_count()),
                output_len: 1,
            }),
            dataset: &dataset,
            config,
        };
        info!("running variant {}", arm.name);
        arms.push((variant, arm.run_recorded(&mut cache, run_dir)));
    }
    let summary: Vec<&ArmSummary> = arms.iter().map(|(_, a)| &a.summary).collect();
    write_json(&run_dir.join("summary.json"), &summary)?;
    if arms.iter().any(|(_, a)| a.report.is_some()) {
        render_report(run_dir)?;
    }
    Ok(ExperimentOutcome {
        directory: run_dir.to_owned(),
        arms,
    })
}

/// Directory name for a sweep point, e.g. `lambda_0.25`.
pub fn sweep_point_name(lambda: f64) -> String {
    format!("lambda_{lambda}")
}

/// Trains one model per `sweep.lambdas` entry with `sweep.attention`.
pub fn sweep(config: &ExperimentConfig, run_dir: &Path) -> Result<SweepOutcome> {
    if config.sweep.lambdas.is_empty() {
        return Err(Error::config("sweep.lambdas is empty"));
    }
    let dataset = prepare_run_dir(config, run_dir)?;
    let mut cache = TrainCache::new();
    let mut points = Vec::new();
    let mut reports = Vec::new();
    for &lambda in &config.sweep.lambdas {
        let arm = Arm {
            name: format!("lambda={lambda}"),
            dir: run_dir.join("sweep").join(sweep_point_name(lambda)),
            attention: config.sweep.attention,
            lambda,
            mmr: None,
            dataset: &dataset,
            config,
        };
        info!("sweep point λ={lambda}");
        let result = arm.run_recorded(&mut cache, run_dir);
        points.push(result.summary);
        reports.push(result.report);
    }

    let trend_cutoff = if config.cutoffs.contains(&10) {
        10
    } else {
        config.cutoffs[0]
    };
    let mut curves: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
    for (k, report) in reports.iter().enumerate() {
        if let Some(r) = report {
            for (key, v) in r.flat() {
                curves
                    .entry(key)
                    .or_insert_with(|| vec![None; reports.len()])[k] = Some(v);
            }
        }
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = config
        .sweep
        .lambdas
        .iter()
        .zip(&reports)
        .filter_map(|(&l, r)| Some((l, r.as_ref()?.at(trend_cutoff)?.ild)))
        .unzip();
    let summary = SweepSummary {
        attention: config.sweep.attention,
        lambdas: config.sweep.lambdas.clone(),
        curves,
        trend_cutoff,
        spearman_lambda_ild: spearman(&xs, &ys),
        points,
    };
    write_json(&run_dir.join("sweep.json"), &summary)?;
    if reports.iter().any(Option::is_some) {
        render_report(run_dir)?;
    }
    Ok(SweepOutcome {
        directory: run_dir.to_owned(),
        summary,
        reports,
    })
}

/// Average ranks (1-based), ties sharing the mean of their positions.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation (Pearson correlation of average ranks).
/// `None` with fewer than two points or when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}
