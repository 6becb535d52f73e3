//! Experiment configuration files.
//!
//! The format is TOML restricted to flat `key = value` lines with dotted
//! section keys:
//!
//! ```toml
//! name = "ablation"
//! seed = 11
//! variants = ["baseline", "dl", "ca", "dca", "mmr"]
//! cutoffs = [5, 10, 20]
//! betas = [0.5]
//!
//! dataset.path = "runs/prepared"     # or leave unset and use synthetic.*
//! synthetic.item_count = 200
//! synthetic.category_count = 10
//! synthetic.session_count = 2000
//! synthetic.min_len = 3
//! synthetic.max_len = 10
//! synthetic.p_stay = 0.9
//! synthetic.seed = 7
//! synthetic.span_days = 56
//!
//! model.embedding_dim = 32
//! model.hidden_dim = 32
//!
//! loss.lambda = 1.0                  # λ used by the dl and dca variants
//! loss.epsilon = 1e-12
//! loss.learning_rate = 0.005
//! loss.batch_size = 64
//! loss.epochs = 10
//! loss.selection = "validation_f1"   # or "validation_hit_rate", "last_epoch"
//!
//! mmr.lambda = 0.5
//! mmr.pool_size = 100
//!
//! sweep.lambdas = [0.0, 0.25, 0.5, 0.75, 1.0]
//! sweep.attention = "standard"
//! ```
//!
//! Every key is optional. The only environment override is `SEED`, which
//! replaces `seed`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::synth::SyntheticSpec;
use crate::error::{Error, Result};
use crate::model::AttentionMode;
use crate::objective::LossConfig;

/// One arm of an ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Cross-entropy only, standard attention.
    Baseline,
    /// Adds the diversity loss.
    Dl,
    /// Category-aware attention, cross-entropy only.
    Ca,
    /// Diversity loss and category-aware attention.
    Dca,
    /// Baseline scores re-ranked by MMR.
    Mmr,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Baseline,
        Variant::Dl,
        Variant::Ca,
        Variant::Dca,
        Variant::Mmr,
    ];

    /// Directory and file-safe name.
    pub fn key(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Dl => "dl",
            Variant::Ca => "ca",
            Variant::Dca => "dca",
            Variant::Mmr => "mmr",
        }
    }

    /// Label used in tables.
    pub fn label(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Dl => "+DL",
            Variant::Ca => "+CA",
            Variant::Dca => "DCA",
            Variant::Mmr => "+MMR",
        }
    }

    pub fn attention(self) -> AttentionMode {
        match self {
            Variant::Ca | Variant::Dca => AttentionMode::CategoryAware,
            _ => AttentionMode::Standard,
        }
    }

    pub fn uses_diversity_loss(self) -> bool {
        matches!(self, Variant::Dl | Variant::Dca)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "baseline" | "base" => Variant::Baseline,
            "dl" | "+dl" => Variant::Dl,
            "ca" | "+ca" => Variant::Ca,
            "dca" | "+dl+ca" | "dl+ca" => Variant::Dca,
            "mmr" | "+mmr" => Variant::Mmr,
            other => return Err(Error::config(format!("unknown variant {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    /// A directory written by `write_dataset`. When unset the synthetic
    /// generator is used.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub embedding_dim: usize,
    pub hidden_dim: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            embedding_dim: 32,
            hidden_dim: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MmrSection {
    pub lambda: f64,
    pub pool_size: usize,
}

impl Default for MmrSection {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            pool_size: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub lambdas: Vec<f64>,
    pub attention: AttentionMode,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            lambdas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            attention: AttentionMode::Standard,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Seeds parameter initialization and batch shuffling for every variant.
    pub seed: u64,
    pub variants: Vec<Variant>,
    pub cutoffs: Vec<usize>,
    pub betas: Vec<f64>,
    pub dataset: DatasetSection,
    pub synthetic: SyntheticSpec,
    pub model: ModelSection,
    pub loss: LossConfig,
    pub mmr: MmrSection,
    pub sweep: SweepSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            seed: 11,
            variants: vec![Variant::Baseline, Variant::Dl, Variant::Ca, Variant::Dca],
            cutoffs: vec![5, 10, 20],
            betas: vec![0.5],
            dataset: DatasetSection::default(),
            synthetic: SyntheticSpec::default(),
            model: ModelSection::default(),
            loss: LossConfig {
                learning_rate: 0.005,
                ..LossConfig::default()
            },
            mmr: MmrSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("bad experiment config: {e}")))
    }

    /// Reads `path` and applies the `SEED` environment override.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&text)?;
        config.apply_env()?;
        Ok(config)
    }

    /// Starts from `path` (or the defaults), applies `key=value` overrides
    /// such as `loss.epochs=3` or `variants=["baseline","dl"]`, then the
    /// `SEED` environment override. Values are parsed as TOML and fall back
    /// to plain strings.
    pub fn load_with_overrides(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut root = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                text.parse::<toml::Table>()
                    .map_err(|e| Error::config(format!("bad experiment config {}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::config(format!("override {item:?} is not key=value")))?;
            let raw = raw.trim();
            let value = format!("v = {raw}")
                .parse::<toml::Table>()
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.to_owned()));
            let mut parts: Vec<&str> = key.trim().split('.').collect();
            let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| {
                Error::config(format!("override {item:?} has an empty key"))
            })?;
            let mut table = &mut root;
            for part in parts {
                let slot = table
                    .entry(part.to_owned())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()));
                table = slot
                    .as_table_mut()
                    .ok_or_else(|| Error::config(format!("{part} in {key:?} is not a section")))?;
            }
            table.insert(last.to_owned(), value);
        }
        let mut config: Self = toml::Value::Table(root)
            .try_into()
            .map_err(|e| Error::config(format!("bad experiment config: {e}")))?;
        config.apply_env()?;
        Ok(config)
    }

    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(seed) = std::env::var("SEED") {
            self.seed = seed
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("SEED must be an unsigned integer, got {seed:?}")))?;
        }
        Ok(())
    }

    /// Renders the config as flat `section.key = value` lines.
    pub fn to_toml(&self) -> String {
        let value = toml::Value::try_from(self).expect("experiment config serializes");
        let mut out = String::new();
        let toml::Value::Table(top) = value else {
            unreachable!("struct serializes to a table")
        };
        let (sections, scalars): (Vec<_>, Vec<_>) =
            top.into_iter().partition(|(_, v)| v.is_table());
        for (key, v) in scalars {
            out.push_str(&format!("{key} = {v}\n"));
        }
        for (section, table) in sections {
            out.push('\n');
            if let toml::Value::Table(entries) = table {
                for (key, v) in entries {
                    out.push_str(&format!("{section}.{key} = {v}\n"));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.variants.is_empty() {
            return Err(Error::config("variant set is empty"));
        }
        let mut seen = self.variants.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.variants.len() {
            return Err(Error::config("variant listed twice"));
        }
        if self.cutoffs.is_empty() || self.cutoffs.contains(&0) {
            return Err(Error::config("cutoffs must be a nonempty list of positive integers"));
        }
        if self.betas.iter().any(|&b| !(b > 0.0)) {
            return Err(Error::config("every beta must be positive"));
        }
        if let Some(path) = &self.dataset.path {
            if !path.is_dir() {
                return Err(Error::config(format!(
                    "dataset directory {} does not exist",
                    path.display()
                )));
            }
        } else {
            self.synthetic.validate()?;
        }
        if self.model.embedding_dim == 0 || self.model.hidden_dim == 0 {
            return Err(Error::config("model dimensions must be positive"));
        }
        self.loss.validate()?;
        if !(0.0..=1.0).contains(&self.mmr.lambda) {
            return Err(Error::config("mmr.lambda must be in [0, 1]"));
        }
        if self.mmr.pool_size < self.cutoffs.iter().copied().max().unwrap_or(0) {
            return Err(Error::config("mmr.pool_size must be at least the largest cutoff"));
        }
        if self.sweep.lambdas.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(Error::config("sweep lambdas must lie in [0, 1]"));
        }
        Ok(())
    }
}
