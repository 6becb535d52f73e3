//! Reverse-mode derivatives of a [`ScoreLoss`] through decoder, attention
//! and GRU, written out by hand.

use ndarray::{s, Array1, Array2, ArrayView1};

use super::{LossBreakdown, ScoreLoss};
use crate::data::{Catalog, TrainingInstance};
use crate::error::{Error, Result};
use crate::model::{encode_traced, softmax_in_place, AttentionMode, ModelConfig, ModelParameters};

/// Loss of one instance without gradients.
pub fn loss_value(
    loss: &dyn ScoreLoss,
    params: &ModelParameters,
    config: &ModelConfig,
    instance: &TrainingInstance,
    catalog: &Catalog,
) -> Result<LossBreakdown> {
    let (_, trace) = encode_traced(&instance.prefix, &instance.prefix_categories, params, config)?;
    let mut probs = params.item_embeddings.dot(&trace.query).to_vec();
    softmax_in_place(&mut probs);
    catalog.check_item(instance.target)?;
    Ok(loss.evaluate(&probs, instance.target, catalog).0)
}

/// Exact gradient of `loss` for one instance, one array per parameter block.
pub fn gradient(
    loss: &dyn ScoreLoss,
    params: &ModelParameters,
    config: &ModelConfig,
    instance: &TrainingInstance,
    catalog: &Catalog,
) -> Result<(LossBreakdown, ModelParameters)> {
    let mut grad = params.zeros_like();
    let parts = accumulate_gradient(loss, params, config, instance, catalog, 1.0, &mut grad)?;
    if let Some(block) = grad.first_non_finite() {
        return Err(Error::NonFiniteGradient { block });
    }
    Ok((parts, grad))
}

fn add_outer(m: &mut Array2<f64>, a: &Array1<f64>, b: ArrayView1<'_, f64>) {
    for (row, &ai) in m.rows_mut().into_iter().zip(a) {
        if ai != 0.0 {
            let mut row = row;
            row.scaled_add(ai, &b);
        }
    }
}

/// Adds `weight · ∂L/∂θ` into `grad` and returns the (unweighted) loss.
pub fn accumulate_gradient(
    loss: &dyn ScoreLoss,
    params: &ModelParameters,
    config: &ModelConfig,
    instance: &TrainingInstance,
    catalog: &Catalog,
    weight: f64,
    grad: &mut ModelParameters,
) -> Result<LossBreakdown> {
    catalog.check_item(instance.target)?;
    let (state, tr) = encode_traced(&instance.prefix, &instance.prefix_categories, params, config)?;
    let t = state.hidden.nrows();
    let h_dim = state.hidden.ncols();

    // Decoder: logits = E (B s).
    let mut probs = params.item_embeddings.dot(&tr.query).to_vec();
    softmax_in_place(&mut probs);
    let (parts, dlogits) = loss.evaluate(&probs, instance.target, catalog);
    let dlogits = Array1::from(dlogits) * weight;

    add_outer(&mut grad.item_embeddings, &dlogits, tr.query.view());
    let dquery = params.item_embeddings.t().dot(&dlogits);
    add_outer(&mut grad.decoder, &dquery, state.representation.view());
    let drep = params.decoder.t().dot(&dquery);

    // s = [h_t ; Σ α_j h_j]
    let mut dhidden = Array2::<f64>::zeros((t, h_dim));
    dhidden.row_mut(t - 1).scaled_add(1.0, &drep.slice(s![..h_dim]));
    let dlocal = drep.slice(s![h_dim..]);

    // α_j = vᵀ a_j, a_j = σ(A1 g_t + A2 g_j)
    let mut datt_in = Array2::<f64>::zeros((t, h_dim));
    let mut dpre_sum = Array1::<f64>::zeros(h_dim);
    for j in 0..t {
        let hj = state.hidden.row(j);
        let dalpha = dlocal.dot(&hj);
        dhidden.row_mut(j).scaled_add(state.attention[j], &dlocal);

        let act = tr.att_act.row(j);
        grad.attn_v.scaled_add(dalpha, &act);
        let dpre: Array1<f64> = act
            .iter()
            .zip(&params.attn_v)
            .map(|(&a, &v)| dalpha * v * a * (1.0 - a))
            .collect();
        add_outer(&mut grad.attn_a2, &dpre, tr.att_in.row(j));
        datt_in.row_mut(j).scaled_add(1.0, &params.attn_a2.t().dot(&dpre));
        dpre_sum += &dpre;
    }
    add_outer(&mut grad.attn_a1, &dpre_sum, tr.att_in.row(t - 1));
    datt_in
        .row_mut(t - 1)
        .scaled_add(1.0, &params.attn_a1.t().dot(&dpre_sum));

    // g_j = h_j (+ c_j)
    dhidden += &datt_in;
    if tr.mode == AttentionMode::CategoryAware {
        for (j, &c) in tr.categories.iter().enumerate() {
            grad.category_embeddings
                .row_mut(c)
                .scaled_add(1.0, &datt_in.row(j));
        }
    }

    // GRU, back through time.
    let mut dh_carry = Array1::<f64>::zeros(h_dim);
    for step in (0..t).rev() {
        let dh = &dhidden.row(step) + &dh_carry;
        let (z, r, n, hp) = (
            tr.z.row(step),
            tr.r.row(step),
            tr.n.row(step),
            tr.h_prev.row(step),
        );
        let x = params.item_embeddings.row(tr.items[step]);

        let dz = &dh * &(&n - &hp);
        let dn = &dh * &z;
        let mut dhp = &dh * &z.mapv(|v| 1.0 - v);

        let dpre_n = &dn * &n.mapv(|v| 1.0 - v * v);
        let rh = &r * &hp;
        add_outer(&mut grad.gru_w_n, &dpre_n, x);
        add_outer(&mut grad.gru_u_n, &dpre_n, rh.view());
        grad.gru_b_n += &dpre_n;
        let drh = params.gru_u_n.t().dot(&dpre_n);
        let dr = &drh * &hp;
        dhp += &(&drh * &r);
        let mut dx = params.gru_w_n.t().dot(&dpre_n);

        let dpre_z = &dz * &z.mapv(|v| v * (1.0 - v));
        add_outer(&mut grad.gru_w_z, &dpre_z, x);
        add_outer(&mut grad.gru_u_z, &dpre_z, hp);
        grad.gru_b_z += &dpre_z;
        dhp += &params.gru_u_z.t().dot(&dpre_z);
        dx += &params.gru_w_z.t().dot(&dpre_z);

        let dpre_r = &dr * &r.mapv(|v| v * (1.0 - v));
        add_outer(&mut grad.gru_w_r, &dpre_r, x);
        add_outer(&mut grad.gru_u_r, &dpre_r, hp);
        grad.gru_b_r += &dpre_r;
        dhp += &params.gru_u_r.t().dot(&dpre_r);
        dx += &params.gru_w_r.t().dot(&dpre_r);

        grad.item_embeddings
            .row_mut(tr.items[step])
            .scaled_add(1.0, &dx);
        dh_carry = dhp;
    }

    Ok(parts)
}
