use ndarray::{s, Array1, Array2, ArrayView1};

use super::{AttentionMode, ModelConfig, ModelParameters, ScoreVector};
use crate::error::{Error, Result};

/// Encoder output for one prefix of length `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderState {
    /// `t × hidden_dim`, row `j` is `h_{j+1}`.
    pub hidden: Array2<f64>,
    /// Raw (unnormalized) attention weights, length `t`.
    pub attention: Array1<f64>,
    /// `[h_t ; Σ_j α_j h_j]`, length `2·hidden_dim`.
    pub representation: Array1<f64>,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct ForwardTrace {
    pub items: Vec<usize>,
    pub categories: Vec<usize>,
    pub mode: AttentionMode,
    /// Hidden state entering each step (`h_0 = 0`), `t × H`.
    pub h_prev: Array2<f64>,
    pub z: Array2<f64>,
    pub r: Array2<f64>,
    pub n: Array2<f64>,
    /// Attention inputs `h_j (+ c_j)`, `t × H`.
    pub att_in: Array2<f64>,
    /// `σ(A1 g_t + A2 g_j)`, `t × H`.
    pub att_act: Array2<f64>,
    /// `decoder · representation`, length `embedding_dim`.
    pub query: Array1<f64>,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn check_prefix(
    prefix: &[usize],
    categories: &[usize],
    params: &ModelParameters,
    mode: AttentionMode,
) -> Result<()> {
    if prefix.is_empty() {
        return Err(Error::Empty("prefix"));
    }
    let m = params.item_embeddings.nrows();
    if let Some(&bad) = prefix.iter().find(|&&i| i >= m) {
        return Err(Error::IndexOutOfRange {
            what: "items",
            index: bad,
            size: m,
        });
    }
    if mode == AttentionMode::CategoryAware {
        check_categories(prefix.len(), categories, params)?;
    }
    Ok(())
}

fn check_categories(t: usize, categories: &[usize], params: &ModelParameters) -> Result<()> {
    if categories.len() != t {
        return Err(Error::ShapeMismatch {
            name: "category_indices".into(),
            expected: vec![t],
            found: vec![categories.len()],
        });
    }
    let n = params.category_embeddings.nrows();
    if let Some(&bad) = categories.iter().find(|&&c| c >= n) {
        return Err(Error::IndexOutOfRange {
            what: "categories",
            index: bad,
            size: n,
        });
    }
    Ok(())
}

/// Attention inputs, activations and weights. Shared by [`attend`] and the
/// traced encoder so both run the same arithmetic.
fn attention_parts(
    hidden: &Array2<f64>,
    mode: AttentionMode,
    categories: &[usize],
    params: &ModelParameters,
) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
    let t = hidden.nrows();
    let mut att_in = hidden.clone();
    if mode == AttentionMode::CategoryAware {
        for (mut row, &c) in att_in.rows_mut().into_iter().zip(categories) {
            row += &params.category_embeddings.row(c);
        }
    }
    let last = params.attn_a1.dot(&att_in.row(t - 1));
    let mut att_act = Array2::zeros(hidden.raw_dim());
    let mut alpha = Array1::zeros(t);
    for j in 0..t {
        let pre = &last + &params.attn_a2.dot(&att_in.row(j));
        let act = pre.mapv(sigmoid);
        alpha[j] = params.attn_v.dot(&act);
        att_act.row_mut(j).assign(&act);
    }
    (att_in, att_act, alpha)
}

/// Attention weights `α_j = vᵀ σ(A1 g_t + A2 g_j)` with `g_j = h_j` in
/// standard mode and `g_j = h_j + c_j` in category-aware mode, where `c_j` is
/// the embedding of the `j`-th item's category.
pub fn attend(
    hidden: &Array2<f64>,
    mode: AttentionMode,
    category_indices: &[usize],
    params: &ModelParameters,
) -> Result<Array1<f64>> {
    if hidden.nrows() == 0 {
        return Err(Error::Empty("hidden states"));
    }
    if mode == AttentionMode::CategoryAware {
        check_categories(hidden.nrows(), category_indices, params)?;
    }
    Ok(attention_parts(hidden, mode, category_indices, params).2)
}

pub fn encode(
    prefix: &[usize],
    categories: &[usize],
    params: &ModelParameters,
    config: &ModelConfig,
) -> Result<EncoderState> {
    encode_traced(prefix, categories, params, config).map(|(state, _)| state)
}

pub(crate) fn encode_traced(
    prefix: &[usize],
    categories: &[usize],
    params: &ModelParameters,
    config: &ModelConfig,
) -> Result<(EncoderState, ForwardTrace)> {
    let mode = config.attention_mode;
    check_prefix(prefix, categories, params, mode)?;
    let t = prefix.len();
    let h_dim = params.gru_u_z.nrows();

    let mut h_prev = Array2::zeros((t, h_dim));
    let mut z_all = Array2::zeros((t, h_dim));
    let mut r_all = Array2::zeros((t, h_dim));
    let mut n_all = Array2::zeros((t, h_dim));
    let mut hidden = Array2::zeros((t, h_dim));
    let mut h = Array1::<f64>::zeros(h_dim);
    for (step, &item) in prefix.iter().enumerate() {
        let x = params.item_embeddings.row(item);
        let z = gate(&params.gru_w_z, &params.gru_u_z, &params.gru_b_z, x, h.view(), sigmoid);
        let r = gate(&params.gru_w_r, &params.gru_u_r, &params.gru_b_r, x, h.view(), sigmoid);
        let rh = &r * &h;
        let n = gate(&params.gru_w_n, &params.gru_u_n, &params.gru_b_n, x, rh.view(), f64::tanh);
        let next = &h + &(&z * &(&n - &h));
        h_prev.row_mut(step).assign(&h);
        z_all.row_mut(step).assign(&z);
        r_all.row_mut(step).assign(&r);
        n_all.row_mut(step).assign(&n);
        hidden.row_mut(step).assign(&next);
        h = next;
    }

    let (att_in, att_act, alpha) = attention_parts(&hidden, mode, categories, params);
    let local = alpha.dot(&hidden);
    let mut representation = Array1::zeros(2 * h_dim);
    representation.slice_mut(s![..h_dim]).assign(&hidden.row(t - 1));
    representation.slice_mut(s![h_dim..]).assign(&local);
    let query = params.decoder.dot(&representation);

    let trace = ForwardTrace {
        items: prefix.to_vec(),
        categories: categories.to_vec(),
        mode,
        h_prev,
        z: z_all,
        r: r_all,
        n: n_all,
        att_in,
        att_act,
        query,
    };
    Ok((
        EncoderState {
            hidden,
            attention: alpha,
            representation,
        },
        trace,
    ))
}

fn gate(
    w: &Array2<f64>,
    u: &Array2<f64>,
    b: &Array1<f64>,
    x: ArrayView1<'_, f64>,
    h: ArrayView1<'_, f64>,
    act: fn(f64) -> f64,
) -> Array1<f64> {
    let mut pre = w.dot(&x);
    pre += &u.dot(&h);
    pre += b;
    pre.mapv_into(act)
}

/// Scores every item as `e_i · (B s_t)`; softmax-normalized on request.
pub fn decode(state: &EncoderState, params: &ModelParameters, normalize: bool) -> ScoreVector {
    let query = params.decoder.dot(&state.representation);
    let scores = ScoreVector::raw(params.item_embeddings.dot(&query).to_vec());
    if normalize {
        scores.normalize()
    } else {
        scores
    }
}

/// `decode(encode(prefix))` in one call.
pub fn forward_scores(
    prefix: &[usize],
    categories: &[usize],
    params: &ModelParameters,
    config: &ModelConfig,
    normalize: bool,
) -> Result<ScoreVector> {
    let state = encode(prefix, categories, params, config)?;
    Ok(decode(&state, params, normalize))
}
