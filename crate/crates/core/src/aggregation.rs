//! Member-to-group aggregation.
//!
//! The central idea: when a group considers an item, not every member's
//! opinion counts equally, and how unequally depends on price. Each member
//! weight is `beta / (1 + exp(-alpha * freq))`, an adaptive sigmoid where
//! `alpha` rises as the item gets cheaper and `freq` rises with the member's
//! purchase frequency. Cheap items steepen the sigmoid so frequent buyers
//! dominate the group embedding; expensive items flatten it toward equality.
//!
//! Also here: the learned softmax attention used by the attention baseline,
//! a uniform average, score-level AVG/EXP composition, and an additive hook
//! for combining group embeddings from other sources.

use crate::data::{GroupId, ItemId, UserId};
use crate::error::{Error, Result};
use crate::nn::{accumulate_outer, matvec, matvec_t, ParamStore};

/// Per-member weights assigned while scoring one (group, item) pair.
#[derive(Clone, Debug, PartialEq)]
pub struct MemberWeightRecord {
    pub group_id: GroupId,
    pub item_id: ItemId,
    /// (member, weight), in membership order.
    pub weights: Vec<(UserId, f64)>,
}

/// Price-adaptive member weight `beta / (1 + exp(-alpha * freq))`.
///
/// At `freq = 0` the weight is exactly `beta / 2` regardless of price. For a
/// given member it grows with frequency; for a given active member it grows
/// as the item gets cheaper (larger `alpha`).
pub fn pgusa_weight(alpha: f64, freq: f64, beta: f64) -> f64 {
    debug_assert!((0.01..=1.0).contains(&alpha), "alpha {alpha} outside [0.01, 1]");
    debug_assert!((0.0..=5.0).contains(&freq), "freq {freq} outside [0, 5]");
    debug_assert!(beta > 0.0, "beta {beta} must be positive");
    beta / (1.0 + (-alpha * freq).exp())
}

fn require_members(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("group", "empty member list"));
    }
    Ok(())
}

/// Weighted sum of member embeddings with price-adaptive weights. Returns
/// the group embedding and the per-member weights (no normalization; the
/// weights deliberately do not sum to 1).
pub fn aggregate_pgusa(
    members: &[&[f64]],
    freqs: &[f64],
    alpha: f64,
    beta: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    require_members(members.len())?;
    assert_eq!(members.len(), freqs.len(), "one freq per member");
    let d = members[0].len();
    let weights: Vec<f64> = freqs.iter().map(|&f| pgusa_weight(alpha, f, beta)).collect();
    let mut g = vec![0.0; d];
    for (u, &w) in members.iter().zip(&weights) {
        assert_eq!(u.len(), d, "member embedding width mismatch");
        for (gk, &uk) in g.iter_mut().zip(*u) {
            *gk += w * uk;
        }
    }
    Ok((g, weights))
}

/// Uniform average of member embeddings; the ablation that removes price
/// guidance while keeping the rest of the predictor intact.
pub fn aggregate_uniform(members: &[&[f64]]) -> Result<(Vec<f64>, Vec<f64>)> {
    require_members(members.len())?;
    let d = members[0].len();
    let w = 1.0 / members.len() as f64;
    let mut g = vec![0.0; d];
    for u in members {
        assert_eq!(u.len(), d, "member embedding width mismatch");
        for (gk, &uk) in g.iter_mut().zip(*u) {
            *gk += w * uk;
        }
    }
    Ok((g, vec![w; members.len()]))
}

/// Gradient of a fixed-weight aggregation (price-adaptive or uniform): the
/// weights do not depend on trainable parameters, so each member's gradient
/// is just its weight times the upstream gradient.
pub fn weighted_backward(weights: &[f64], upstream: &[f64]) -> Vec<Vec<f64>> {
    weights
        .iter()
        .map(|&w| upstream.iter().map(|&g| w * g).collect())
        .collect()
}

/// Parameter names used by the learned attention aggregator under `prefix`:
/// a `d x 2d` projection, its bias, and the scoring vector.
fn attn_names(prefix: &str) -> (String, String, String) {
    (
        format!("{prefix}.w"),
        format!("{prefix}.b"),
        format!("{prefix}.v"),
    )
}

/// Register attention parameters for embedding width `d`.
pub fn register_attention(store: &mut ParamStore, prefix: &str, d: usize, seed: u64) {
    let (w, b, v) = attn_names(prefix);
    store.insert_linear(&w, d, 2 * d, seed);
    store.insert_zeros(&b, 1, d);
    store.insert_linear(&v, 1, d, seed);
}

/// Intermediate state of one attention forward pass, consumed by backward.
#[derive(Clone, Debug)]
pub struct AttentionCache {
    /// Softmax weights per member.
    pub weights: Vec<f64>,
    /// Post-ReLU hidden vectors per member.
    hidden: Vec<Vec<f64>>,
    /// `concat(member, item)` inputs per member.
    cats: Vec<Vec<f64>>,
}

/// Learned softmax attention over members, conditioned on the item: score
/// each member with `v . relu(W [u_t; i] + b)`, softmax the scores, and
/// average the member embeddings under those weights.
pub fn aggregate_attention(
    store: &ParamStore,
    prefix: &str,
    members: &[&[f64]],
    item: &[f64],
) -> Result<(Vec<f64>, AttentionCache)> {
    require_members(members.len())?;
    let (w_name, b_name, v_name) = attn_names(prefix);
    let w = store.value(&w_name);
    let b = store.value(&b_name);
    let v = store.value(&v_name);
    let d = item.len();

    let mut scores = Vec::with_capacity(members.len());
    let mut hidden = Vec::with_capacity(members.len());
    let mut cats = Vec::with_capacity(members.len());
    for u in members {
        assert_eq!(u.len(), d, "member embedding width mismatch");
        let mut cat = Vec::with_capacity(2 * d);
        cat.extend_from_slice(u);
        cat.extend_from_slice(item);
        let mut h = matvec(w, &cat);
        for (hk, bk) in h.iter_mut().zip(b.row(0)) {
            *hk = (*hk + bk).max(0.0);
        }
        scores.push(v.row(0).iter().zip(&h).map(|(a, b)| a * b).sum::<f64>());
        hidden.push(h);
        cats.push(cat);
    }

    // Stable softmax.
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let weights: Vec<f64> = exps.iter().map(|&e| e / total).collect();

    let mut g = vec![0.0; d];
    for (u, &a) in members.iter().zip(&weights) {
        for (gk, &uk) in g.iter_mut().zip(*u) {
            *gk += a * uk;
        }
    }
    Ok((g, AttentionCache { weights, hidden, cats }))
}

/// Backward pass of the attention aggregator. Accumulates parameter
/// gradients and returns (per-member gradients, item gradient).
pub fn aggregate_attention_backward(
    store: &mut ParamStore,
    prefix: &str,
    cache: &AttentionCache,
    members: &[&[f64]],
    item: &[f64],
    upstream: &[f64],
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let (w_name, b_name, v_name) = attn_names(prefix);
    let d = item.len();
    let a = &cache.weights;

    // g = sum a_t u_t: direct member grads plus grads into the weights.
    let mut member_grads: Vec<Vec<f64>> = members
        .iter()
        .zip(a)
        .map(|(_, &at)| upstream.iter().map(|&g| at * g).collect())
        .collect();
    let da: Vec<f64> = members
        .iter()
        .map(|u| u.iter().zip(upstream).map(|(x, g)| x * g).sum())
        .collect();

    // Softmax: ds_t = a_t (da_t - sum_k a_k da_k).
    let mix: f64 = a.iter().zip(&da).map(|(x, y)| x * y).sum();
    let ds: Vec<f64> = a.iter().zip(&da).map(|(&at, &dat)| at * (dat - mix)).collect();

    let mut item_grad = vec![0.0; d];
    for (t, &dst) in ds.iter().enumerate() {
        let h = &cache.hidden[t];
        // s_t = v . h_t.
        {
            let v_grad = store.grad_mut(&v_name);
            for (gk, &hk) in v_grad.row_mut(0).iter_mut().zip(h) {
                *gk += dst * hk;
            }
        }
        let v = store.value(&v_name);
        // ReLU derivative from post-activation sign.
        let dz: Vec<f64> = v
            .row(0)
            .iter()
            .zip(h)
            .map(|(&vk, &hk)| if hk > 0.0 { dst * vk } else { 0.0 })
            .collect();
        accumulate_outer(store.grad_mut(&w_name), &dz, &cache.cats[t]);
        for (gk, &dzk) in store.grad_mut(&b_name).row_mut(0).iter_mut().zip(&dz) {
            *gk += dzk;
        }
        let dcat = matvec_t(store.value(&w_name), &dz);
        for (gk, &ck) in member_grads[t].iter_mut().zip(&dcat[..d]) {
            *gk += ck;
        }
        for (gk, &ck) in item_grad.iter_mut().zip(&dcat[d..]) {
            *gk += ck;
        }
    }
    (member_grads, item_grad)
}

/// Mean of per-member scores.
pub fn aggregate_scores_avg(scores: &[f64]) -> Result<f64> {
    require_members(scores.len())?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Frequency-weighted mean of per-member scores; falls back to the plain
/// mean when every member has zero frequency.
pub fn aggregate_scores_exp(scores: &[f64], freqs: &[f64]) -> Result<f64> {
    require_members(scores.len())?;
    assert_eq!(scores.len(), freqs.len(), "one freq per score");
    let total: f64 = freqs.iter().sum();
    if total == 0.0 {
        return aggregate_scores_avg(scores);
    }
    Ok(scores.iter().zip(freqs).map(|(s, f)| s * f).sum::<f64>() / total)
}

/// Elementwise sum of group embeddings from multiple aggregation sources.
pub fn compose_additive(embeddings: &[&[f64]]) -> Result<Vec<f64>> {
    require_members(embeddings.len())?;
    let d = embeddings[0].len();
    let mut out = vec![0.0; d];
    for e in embeddings {
        if e.len() != d {
            return Err(Error::invalid(
                "embedding",
                format!("dimension {} does not match {}", e.len(), d),
            ));
        }
        for (ok, &ek) in out.iter_mut().zip(*e) {
            *ok += ek;
        }
    }
    Ok(out)
}
