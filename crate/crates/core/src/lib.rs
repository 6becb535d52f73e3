//! Diversified session-based recommendation.
//!
//! An attention-based next-item predictor (GRU encoder with a global/local
//! session representation and a bilinear decoder) extended by two plugins:
//!
//! * a diversity-oriented loss, the negative entropy of the category
//!   distribution obtained by summing item scores per category, combined with
//!   cross-entropy as `L = L_acc + λ·L_div`;
//! * category-aware attention, which adds category embeddings to the hidden
//!   states only while computing attention weights.
//!
//! Around the model sit the data pipeline ([`data`]), training and gradients
//! ([`objective`]), the accuracy/diversity metric suite ([`metrics`]), an MMR
//! re-ranking baseline ([`rerank`]) and the experiment harness ([`harness`]).

pub mod data;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod rerank;

pub use data::{Catalog, InteractionRecord, Session, SplitDataset, TrainingInstance};
pub use error::{Error, Result};
pub use metrics::{MetricsReport, RecList};
pub use model::{AttentionMode, ModelConfig, ModelParameters, ScoreVector};
pub use objective::LossConfig;
pub use rerank::MmrConfig;
