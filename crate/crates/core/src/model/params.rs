use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "dcarec-checkpoint/1";

/// All trainable arrays. The same struct doubles as a gradient container.
///
/// GRU gates follow `z = σ(W_z x + U_z h + b_z)`,
/// `r = σ(W_r x + U_r h + b_r)`, `n = tanh(W_n x + U_n (r ⊙ h) + b_n)`,
/// `h' = (1 − z) ⊙ h + z ⊙ n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    /// `m × embedding_dim`
    pub item_embeddings: Array2<f64>,
    /// `n × hidden_dim`
    pub category_embeddings: Array2<f64>,
    pub gru_w_z: Array2<f64>,
    pub gru_w_r: Array2<f64>,
    pub gru_w_n: Array2<f64>,
    pub gru_u_z: Array2<f64>,
    pub gru_u_r: Array2<f64>,
    pub gru_u_n: Array2<f64>,
    pub gru_b_z: Array1<f64>,
    pub gru_b_r: Array1<f64>,
    pub gru_b_n: Array1<f64>,
    /// Attention projection `v`.
    pub attn_v: Array1<f64>,
    /// Transform of the last hidden state.
    pub attn_a1: Array2<f64>,
    /// Transform of each attended hidden state.
    pub attn_a2: Array2<f64>,
    /// Bilinear decoder, `embedding_dim × 2·hidden_dim`.
    pub decoder: Array2<f64>,
}

impl ModelParameters {
    pub fn zeros(config: &ModelConfig) -> Self {
        let (m, n, d, h) = (
            config.vocab_size,
            config.category_count,
            config.embedding_dim,
            config.hidden_dim,
        );
        Self {
            item_embeddings: Array2::zeros((m, d)),
            category_embeddings: Array2::zeros((n, h)),
            gru_w_z: Array2::zeros((h, d)),
            gru_w_r: Array2::zeros((h, d)),
            gru_w_n: Array2::zeros((h, d)),
            gru_u_z: Array2::zeros((h, h)),
            gru_u_r: Array2::zeros((h, h)),
            gru_u_n: Array2::zeros((h, h)),
            gru_b_z: Array1::zeros(h),
            gru_b_r: Array1::zeros(h),
            gru_b_n: Array1::zeros(h),
            attn_v: Array1::zeros(h),
            attn_a1: Array2::zeros((h, h)),
            attn_a2: Array2::zeros((h, h)),
            decoder: Array2::zeros((d, 2 * h)),
        }
    }

    /// Seeded init: each block uniform in `[−1/√fan_in, 1/√fan_in]`, where
    /// fan-in is the column count (the length, for vectors).
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut params = Self::zeros(config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        for (_, mut block) in params.blocks_mut() {
            let fan_in = *block.shape().last().expect("non-scalar block") as f64;
            let bound = 1.0 / fan_in.sqrt();
            for v in block.iter_mut() {
                *v = rng.random_range(-bound..=bound);
            }
        }
        Ok(params)
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    pub fn fill(&mut self, value: f64) {
        for (_, mut b) in self.blocks_mut() {
            b.fill(value);
        }
    }

    pub const BLOCK_NAMES: [&'static str; 15] = [
        "item_embeddings",
        "category_embeddings",
        "gru_w_z",
        "gru_w_r",
        "gru_w_n",
        "gru_u_z",
        "gru_u_r",
        "gru_u_n",
        "gru_b_z",
        "gru_b_r",
        "gru_b_n",
        "attn_v",
        "attn_a1",
        "attn_a2",
        "decoder",
    ];

    /// Named views of every block, in [`Self::BLOCK_NAMES`] order.
    pub fn blocks(&self) -> Vec<(&'static str, ArrayViewD<'_, f64>)> {
        let views = [
            self.item_embeddings.view().into_dyn(),
            self.category_embeddings.view().into_dyn(),
            self.gru_w_z.view().into_dyn(),
            self.gru_w_r.view().into_dyn(),
            self.gru_w_n.view().into_dyn(),
            self.gru_u_z.view().into_dyn(),
            self.gru_u_r.view().into_dyn(),
            self.gru_u_n.view().into_dyn(),
            self.gru_b_z.view().into_dyn(),
            self.gru_b_r.view().into_dyn(),
            self.gru_b_n.view().into_dyn(),
            self.attn_v.view().into_dyn(),
            self.attn_a1.view().into_dyn(),
            self.attn_a2.view().into_dyn(),
            self.decoder.view().into_dyn(),
        ];
        Self::BLOCK_NAMES.into_iter().zip(views).collect()
    }

    pub fn blocks_mut(&mut self) -> Vec<(&'static str, ArrayViewMutD<'_, f64>)> {
        let views = [
            self.item_embeddings.view_mut().into_dyn(),
            self.category_embeddings.view_mut().into_dyn(),
            self.gru_w_z.view_mut().into_dyn(),
            self.gru_w_r.view_mut().into_dyn(),
            self.gru_w_n.view_mut().into_dyn(),
            self.gru_u_z.view_mut().into_dyn(),
            self.gru_u_r.view_mut().into_dyn(),
            self.gru_u_n.view_mut().into_dyn(),
            self.gru_b_z.view_mut().into_dyn(),
            self.gru_b_r.view_mut().into_dyn(),
            self.gru_b_n.view_mut().into_dyn(),
            self.attn_v.view_mut().into_dyn(),
            self.attn_a1.view_mut().into_dyn(),
            self.attn_a2.view_mut().into_dyn(),
            self.decoder.view_mut().into_dyn(),
        ];
        Self::BLOCK_NAMES.into_iter().zip(views).collect()
    }

    /// `self += other * scale`, block by block.
    pub fn scaled_add(&mut self, scale: f64, other: &Self) {
        for ((_, mut a), (_, b)) in self.blocks_mut().into_iter().zip(other.blocks()) {
            a.scaled_add(scale, &b);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, mut b) in self.blocks_mut() {
            b.mapv_inplace(|v| v * factor);
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    /// First block holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.blocks()
            .into_iter()
            .find(|(_, b)| b.iter().any(|v| !v.is_finite()))
            .map(|(name, _)| name)
    }

    pub fn check_shapes(&self, config: &ModelConfig) -> Result<()> {
        let expected = Self::zeros(config);
        for ((name, want), (_, got)) in expected.blocks().into_iter().zip(self.blocks()) {
            if want.shape() != got.shape() {
                return Err(Error::ShapeMismatch {
                    name: name.into(),
                    expected: want.shape().to_vec(),
                    found: got.shape().to_vec(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    config: ModelConfig,
    tensors: Vec<Tensor>,
}

#[derive(Serialize, Deserialize)]
struct Tensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Writes config and parameters as one JSON document with named, shaped
/// tensors. Floats round-trip exactly.
pub fn save_checkpoint(path: &Path, config: &ModelConfig, params: &ModelParameters) -> Result<()> {
    params.check_shapes(config)?;
    let tensors = params
        .blocks()
        .into_iter()
        .map(|(name, b)| Tensor {
            name: name.to_owned(),
            shape: b.shape().to_vec(),
            data: b.iter().copied().collect(),
        })
        .collect();
    let ckpt = Checkpoint {
        format: CHECKPOINT_FORMAT.to_owned(),
        config: config.clone(),
        tensors,
    };
    let text = serde_json::to_string(&ckpt).map_err(|source| Error::Json {
        path: path.to_owned(),
        source,
    })?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelConfig, ModelParameters)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_owned(),
        source,
    })?;
    if ckpt.format != CHECKPOINT_FORMAT {
        return Err(Error::malformed(
            path.display().to_string(),
            format!("unsupported checkpoint format {:?}", ckpt.format),
        ));
    }
    ckpt.config.validate()?;
    let mut params = ModelParameters::zeros(&ckpt.config);
    let mut filled = [false; ModelParameters::BLOCK_NAMES.len()];
    for tensor in ckpt.tensors {
        let slot = ModelParameters::BLOCK_NAMES
            .iter()
            .position(|&n| n == tensor.name)
            .ok_or_else(|| {
                Error::malformed(
                    path.display().to_string(),
                    format!("unknown tensor {:?}", tensor.name),
                )
            })?;
        let mut blocks = params.blocks_mut();
        let block = &mut blocks[slot].1;
        if block.shape() != tensor.shape.as_slice() || tensor.data.len() != block.len() {
            return Err(Error::ShapeMismatch {
                name: tensor.name,
                expected: block.shape().to_vec(),
                found: tensor.shape,
            });
        }
        for (dst, src) in block.iter_mut().zip(tensor.data) {
            *dst = src;
        }
        filled[slot] = true;
    }
    if let Some(missing) = filled.iter().position(|f| !f) {
        return Err(Error::malformed(
            path.display().to_string(),
            format!("missing tensor {:?}", ModelParameters::BLOCK_NAMES[missing]),
        ));
    }
    Ok((ckpt.config, params))
}
