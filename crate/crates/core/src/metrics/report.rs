use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{diversity_score, entropy_metric, f_beta, hit_rate, ild, mrr, ndcg, RecList};
use crate::data::{Catalog, TrainingInstance};
use crate::error::{Error, Result};
use crate::model::{forward_scores, recommend, ModelConfig, ModelParameters};
use crate::rerank::{mmr_rerank, MmrConfig};

/// Anything that can produce top-N lists for a prefix.
pub trait Ranker: Sync {
    /// One list per entry of `cutoffs`, in the same order.
    fn rank(&self, instance: &TrainingInstance, cutoffs: &[usize]) -> Result<Vec<RecList>>;
}

/// Ranks with a trained model, optionally diversified by MMR.
pub struct ModelRanker<'a> {
    params: &'a ModelParameters,
    config: &'a ModelConfig,
    mmr: Option<(&'a Catalog, MmrConfig)>,
}

impl<'a> ModelRanker<'a> {
    pub fn new(params: &'a ModelParameters, config: &'a ModelConfig) -> Self {
        Self {
            params,
            config,
            mmr: None,
        }
    }

    /// Re-rank each score vector with MMR; `mmr.output_len` is overridden by
    /// the requested cutoff.
    pub fn with_mmr(mut self, catalog: &'a Catalog, mmr: MmrConfig) -> Self {
        self.mmr = Some((catalog, mmr));
        self
    }
}

impl Ranker for ModelRanker<'_> {
    fn rank(&self, instance: &TrainingInstance, cutoffs: &[usize]) -> Result<Vec<RecList>> {
        let scores = forward_scores(
            &instance.prefix,
            &instance.prefix_categories,
            self.params,
            self.config,
            false,
        )?;
        cutoffs
            .iter()
            .map(|&n| match &self.mmr {
                None => recommend(&scores, n),
                Some((catalog, cfg)) => mmr_rerank(
                    &scores,
                    catalog,
                    &MmrConfig {
                        output_len: n,
                        ..cfg.clone()
                    },
                ),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub model_id: String,
    pub lambda: f64,
    pub seed: u64,
    #[serde(default)]
    pub attention: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutoffMetrics {
    pub n: usize,
    pub hr: f64,
    pub mrr: f64,
    pub ndcg: f64,
    pub ild: f64,
    pub entropy: f64,
    pub ds: f64,
    /// `F_1(HR, ILD)`.
    pub f1: f64,
    /// `(β, F_β(HR, DS))` for every requested β.
    pub f_beta: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub metadata: RunMetadata,
    /// Number of evaluated prefixes.
    pub session_count: usize,
    pub betas: Vec<f64>,
    pub cutoffs: Vec<CutoffMetrics>,
}

pub(crate) fn f1_key(n: usize) -> String {
    format!("F1(HR,ILD)@{n}")
}

pub(crate) fn f_beta_key(beta: f64, n: usize) -> String {
    format!("F{beta}(HR,DS)@{n}")
}

impl MetricsReport {
    pub fn at(&self, n: usize) -> Option<&CutoffMetrics> {
        self.cutoffs.iter().find(|c| c.n == n)
    }

    /// Values keyed `metric@N`, e.g. `HR@10`, `F1(HR,ILD)@10`,
    /// `F0.5(HR,DS)@20`.
    pub fn flat(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for c in &self.cutoffs {
            let n = c.n;
            for (name, v) in [
                ("HR", c.hr),
                ("MRR", c.mrr),
                ("NDCG", c.ndcg),
                ("ILD", c.ild),
                ("Entropy", c.entropy),
                ("DS", c.ds),
            ] {
                out.insert(format!("{name}@{n}"), v);
            }
            out.insert(f1_key(n), c.f1);
            for &(beta, v) in &c.f_beta {
                out.insert(f_beta_key(beta, n), v);
            }
        }
        out
    }

    pub fn to_file(&self) -> ReportFile {
        ReportFile {
            metadata: self.metadata.clone(),
            session_count: self.session_count,
            cutoffs: self.cutoffs.iter().map(|c| c.n).collect(),
            betas: self.betas.clone(),
            metrics: self.flat(),
        }
    }

    /// Aligned text table, one row per metric and one column per cutoff.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<(String, Vec<f64>)> = ["HR", "MRR", "NDCG", "ILD", "Entropy", "DS"]
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let vals = self
                    .cutoffs
                    .iter()
                    .map(|c| [c.hr, c.mrr, c.ndcg, c.ild, c.entropy, c.ds][k])
                    .collect();
                (name.to_string(), vals)
            })
            .collect();
        rows.push(("F1(HR,ILD)".into(), self.cutoffs.iter().map(|c| c.f1).collect()));
        for (b, &beta) in self.betas.iter().enumerate() {
            rows.push((
                format!("F{beta}(HR,DS)"),
                self.cutoffs.iter().map(|c| c.f_beta[b].1).collect(),
            ));
        }
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# {} (lambda={}, seed={}, attention={}, prefixes={})",
            self.metadata.model_id,
            self.metadata.lambda,
            self.metadata.seed,
            self.metadata.attention,
            self.session_count
        );
        let _ = write!(out, "{:<14}", "metric");
        for c in &self.cutoffs {
            let _ = write!(out, "{:>10}", format!("@{}", c.n));
        }
        out.push('\n');
        for (name, vals) in rows {
            let _ = write!(out, "{name:<14}");
            for v in vals {
                let _ = write!(out, "{v:>10.4}");
            }
            out.push('\n');
        }
        out
    }

    /// Writes `report.json` and `report.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.to_file().write(&dir.join("report.json"))?;
        let txt = dir.join("report.txt");
        fs::write(&txt, self.to_table()).map_err(|e| Error::io(&txt, e))
    }
}

/// Machine-readable report, keyed by `metric@N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub metadata: RunMetadata,
    pub session_count: usize,
    pub cutoffs: Vec<usize>,
    pub betas: Vec<f64>,
    pub metrics: BTreeMap<String, f64>,
}

impl ReportFile {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|source| Error::Json {
            path: path.to_owned(),
            source,
        })?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_owned(),
            source,
        })
    }
}

/// Macro-averages every list metric over `instances` for each cutoff.
///
/// F-scores are composed from the averaged HR and ILD/DS, not averaged per
/// prefix.
pub fn evaluate(
    ranker: &dyn Ranker,
    instances: &[TrainingInstance],
    catalog: &Catalog,
    cutoffs: &[usize],
    betas: &[f64],
    metadata: RunMetadata,
) -> Result<MetricsReport> {
    if instances.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    if cutoffs.is_empty() {
        return Err(Error::config("at least one cutoff is required"));
    }
    if let Some(b) = betas.iter().find(|&&b| !(b > 0.0)) {
        return Err(Error::config(format!("beta must be positive, got {b}")));
    }

    // Per instance: [hr, mrr, ndcg, ild, entropy, ds] for every cutoff.
    let per_instance: Vec<Vec<[f64; 6]>> = instances
        .par_iter()
        .map(|inst| {
            let lists = ranker.rank(inst, cutoffs)?;
            Ok(lists
                .iter()
                .map(|rec| {
                    [
                        hit_rate(rec, inst.target),
                        mrr(rec, inst.target),
                        ndcg(rec, inst.target),
                        ild(rec, catalog),
                        entropy_metric(rec, catalog),
                        diversity_score(rec, catalog),
                    ]
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    // Sequential sums in instance order keep the result thread-count independent.
    let count = instances.len() as f64;
    let mut out = Vec::with_capacity(cutoffs.len());
    for (k, &n) in cutoffs.iter().enumerate() {
        let mut sums = [0.0f64; 6];
        for row in &per_instance {
            for (s, v) in sums.iter_mut().zip(row[k]) {
                *s += v;
            }
        }
        let [hr, mrr, ndcg, ild, entropy, ds] = sums.map(|s| s / count);
        let f_beta_vals = betas
            .iter()
            .map(|&b| Ok((b, f_beta(hr, ds, b)?)))
            .collect::<Result<_>>()?;
        out.push(CutoffMetrics {
            n,
            hr,
            mrr,
            ndcg,
            ild,
            entropy,
            ds,
            f1: f_beta(hr, ild, 1.0)?,
            f_beta: f_beta_vals,
        });
    }
    Ok(MetricsReport {
        metadata,
        session_count: instances.len(),
        betas: betas.to_vec(),
        cutoffs: out,
    })
}
