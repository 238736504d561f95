//! The grouped embedding predictor.
//!
//! Scoring a (group, item) pair: aggregate member embeddings into `g` with
//! the configured aggregator, add the group's own embedding `b` to get the
//! profile `f = g + b`, pool `e = concat(f, i, f * i)`, and push `e` through
//! the scoring head. The user branch shares the head and embeddings: for a
//! (user, item) pair the user embedding itself plays the role of `f`.

use crate::aggregation::{
    aggregate_attention, aggregate_attention_backward, aggregate_pgusa, aggregate_uniform,
    register_attention, weighted_backward, AttentionCache,
};
use crate::data::{Dataset, GroupId, ItemId, UserId};
use crate::error::{Error, Result};
use crate::nn::{MlpCache, MlpSpec, ParamStore};

/// Row counts of the embedding tables plus the embedding width.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PredictorDims {
    pub n_users: usize,
    pub n_items: usize,
    pub n_groups: usize,
    pub d: usize,
}

/// How member embeddings combine into the aggregated group embedding.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AggregatorKind {
    /// Price-adaptive sigmoid member weights with ceiling `beta`.
    PriceAdaptive { beta: f64 },
    /// Learned softmax attention conditioned on the item.
    Attention,
    /// Sum of the price-adaptive and attention aggregations.
    AttentionWithPrice { beta: f64 },
    /// Plain average; the ablation that removes member weighting entirely.
    Uniform,
}

impl AggregatorKind {
    pub fn beta(&self) -> Option<f64> {
        match *self {
            AggregatorKind::PriceAdaptive { beta }
            | AggregatorKind::AttentionWithPrice { beta } => Some(beta),
            _ => None,
        }
    }

    pub fn uses_attention(&self) -> bool {
        matches!(
            self,
            AggregatorKind::Attention | AggregatorKind::AttentionWithPrice { .. }
        )
    }

    pub fn label(&self) -> &'static str {
        match self {
            AggregatorKind::PriceAdaptive { .. } => "price-adaptive",
            AggregatorKind::Attention => "attention",
            AggregatorKind::AttentionWithPrice { .. } => "attention+price",
            AggregatorKind::Uniform => "uniform",
        }
    }
}

const USER_EMB: &str = "emb.user";
const ITEM_EMB: &str = "emb.item";
const GROUP_EMB: &str = "emb.group";
const ATTN: &str = "attn";
const HEAD: &str = "head";

/// Group scoring model: embedding tables, optional attention parameters, and
/// a shared scoring head.
#[derive(Clone, Debug)]
pub struct GroupPredictor {
    pub dims: PredictorDims,
    pub aggregator: AggregatorKind,
    head: MlpSpec,
}

/// Forward state of one group prediction, consumed by the backward pass.
#[derive(Clone, Debug)]
pub struct GroupCache {
    /// Effective per-member weights in membership order (for analysis; the
    /// hybrid aggregator reports the sum of both paths).
    pub weights: Vec<f64>,
    /// Aggregated-plus-own group profile `f`.
    pub f: Vec<f64>,
    price_weights: Option<Vec<f64>>,
    attn: Option<AttentionCache>,
    mlp: MlpCache,
}

/// Forward state of one user prediction.
#[derive(Clone, Debug)]
pub struct UserCache {
    mlp: MlpCache,
}

/// `concat(profile, item, profile * item)`.
fn pool(profile: &[f64], item: &[f64]) -> Vec<f64> {
    let mut e = Vec::with_capacity(3 * profile.len());
    e.extend_from_slice(profile);
    e.extend_from_slice(item);
    e.extend(profile.iter().zip(item).map(|(a, b)| a * b));
    e
}

/// Split the pooled gradient back into profile and item gradients.
fn pool_backward(de: &[f64], profile: &[f64], item: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = profile.len();
    let dprofile: Vec<f64> = (0..d).map(|k| de[k] + de[2 * d + k] * item[k]).collect();
    let ditem: Vec<f64> = (0..d).map(|k| de[d + k] + de[2 * d + k] * profile[k]).collect();
    (dprofile, ditem)
}

impl GroupPredictor {
    pub fn new(dims: PredictorDims, aggregator: AggregatorKind) -> Self {
        GroupPredictor {
            dims,
            aggregator,
            head: MlpSpec::standard_head(dims.d),
        }
    }

    pub fn head(&self) -> &MlpSpec {
        &self.head
    }

    /// Fresh parameters: embedding tables, attention if used, and the head.
    pub fn init_params(&self, seed: u64) -> ParamStore {
        let mut store = ParamStore::new();
        let d = self.dims.d;
        store.insert_embedding(USER_EMB, self.dims.n_users, d, seed);
        store.insert_embedding(ITEM_EMB, self.dims.n_items, d, seed);
        store.insert_embedding(GROUP_EMB, self.dims.n_groups, d, seed);
        if self.aggregator.uses_attention() {
            register_attention(&mut store, ATTN, d, seed);
        }
        self.head.register(&mut store, HEAD, seed);
        store
    }

    /// Scalar parameters held in the three embedding tables alone.
    pub fn embedding_param_count(&self) -> usize {
        (self.dims.n_users + self.dims.n_items + self.dims.n_groups) * self.dims.d
    }

    fn check_item(&self, item: ItemId) -> Result<()> {
        if (item as usize) >= self.dims.n_items {
            return Err(Error::DanglingId {
                kind: "item",
                id: item as u64,
            });
        }
        Ok(())
    }

    fn check_group(&self, ds: &Dataset, group: GroupId) -> Result<()> {
        if (group as usize) >= self.dims.n_groups || (group as usize) >= ds.groups.len() {
            return Err(Error::DanglingId {
                kind: "group",
                id: group as u64,
            });
        }
        Ok(())
    }

    /// Score a (group, item) pair. Returns the prediction, the effective
    /// per-member weights in membership order, and the backward cache.
    pub fn predict_group(
        &self,
        store: &ParamStore,
        ds: &Dataset,
        group: GroupId,
        item: ItemId,
    ) -> Result<(f64, Vec<f64>, GroupCache)> {
        self.check_group(ds, group)?;
        self.check_item(item)?;
        let d = self.dims.d;
        let members = &ds.groups[group as usize].members;
        let user_table = store.value(USER_EMB);
        let member_rows: Vec<&[f64]> = members.iter().map(|&u| user_table.row(u as usize)).collect();
        let item_row = store.value(ITEM_EMB).row(item as usize);

        let alpha = ds.items[item as usize].alpha;
        let freqs: Vec<f64> = members.iter().map(|&u| ds.users[u as usize].freq).collect();

        let mut price_weights = None;
        let mut attn = None;
        let (g, weights) = match self.aggregator {
            AggregatorKind::PriceAdaptive { beta } => {
                let (g, w) = aggregate_pgusa(&member_rows, &freqs, alpha, beta)?;
                price_weights = Some(w.clone());
                (g, w)
            }
            AggregatorKind::Uniform => aggregate_uniform(&member_rows)?,
            AggregatorKind::Attention => {
                let (g, cache) = aggregate_attention(store, ATTN, &member_rows, item_row)?;
                let w = cache.weights.clone();
                attn = Some(cache);
                (g, w)
            }
            AggregatorKind::AttentionWithPrice { beta } => {
                let (gp, wp) = aggregate_pgusa(&member_rows, &freqs, alpha, beta)?;
                let (ga, cache) = aggregate_attention(store, ATTN, &member_rows, item_row)?;
                let g: Vec<f64> = gp.iter().zip(&ga).map(|(a, b)| a + b).collect();
                let w: Vec<f64> = wp.iter().zip(&cache.weights).map(|(a, b)| a + b).collect();
                price_weights = Some(wp);
                attn = Some(cache);
                (g, w)
            }
        };

        let b = store.value(GROUP_EMB).row(group as usize);
        let f: Vec<f64> = g.iter().zip(b).map(|(gk, bk)| gk + bk).collect();
        let e = pool(&f, item_row);
        let (y, mlp) = self.head.forward_scalar(store, HEAD, &e);
        debug_assert_eq!(e.len(), 3 * d);
        Ok((
            y,
            weights.clone(),
            GroupCache {
                weights,
                f,
                price_weights,
                attn,
                mlp,
            },
        ))
    }

    /// Accumulate gradients for one group prediction into every reachable
    /// tensor: head, attention (if used), and the three embedding tables.
    pub fn backward_group(
        &self,
        store: &mut ParamStore,
        ds: &Dataset,
        group: GroupId,
        item: ItemId,
        cache: &GroupCache,
        upstream: f64,
    ) -> Result<()> {
        self.check_group(ds, group)?;
        self.check_item(item)?;
        let d = self.dims.d;
        let members = &ds.groups[group as usize].members;
        // Cloned rows: the backward helpers need member and item values while
        // the store is mutably borrowed for gradient accumulation.
        let member_rows: Vec<Vec<f64>> = members
            .iter()
            .map(|&u| store.value(USER_EMB).row(u as usize).to_vec())
            .collect();
        let member_refs: Vec<&[f64]> = member_rows.iter().map(|r| r.as_slice()).collect();
        let item_row = store.value(ITEM_EMB).row(item as usize).to_vec();

        let de = self.head.backward_scalar(store, HEAD, &cache.mlp, upstream);
        let (df, mut di) = pool_backward(&de, &cache.f, &item_row);

        // f = g + b: the profile gradient reaches both the group embedding
        // and the aggregator output.
        for (k, &v) in df.iter().enumerate() {
            store.grad_mut(GROUP_EMB).row_mut(group as usize)[k] += v;
        }
        let dg = df;

        let mut member_grads: Vec<Vec<f64>> = vec![vec![0.0; d]; members.len()];
        match self.aggregator {
            AggregatorKind::PriceAdaptive { .. } => {
                let w = cache.price_weights.as_ref().expect("price weights cached");
                member_grads = weighted_backward(w, &dg);
            }
            AggregatorKind::Uniform => {
                member_grads = weighted_backward(&cache.weights, &dg);
            }
            AggregatorKind::Attention => {
                let attn = cache.attn.as_ref().expect("attention cache");
                let (mg, di2) =
                    aggregate_attention_backward(store, ATTN, attn, &member_refs, &item_row, &dg);
                member_grads = mg;
                for (k, &v) in di2.iter().enumerate() {
                    di[k] += v;
                }
            }
            AggregatorKind::AttentionWithPrice { .. } => {
                let w = cache.price_weights.as_ref().expect("price weights cached");
                member_grads = weighted_backward(w, &dg);
                let attn = cache.attn.as_ref().expect("attention cache");
                let (mg, di2) =
                    aggregate_attention_backward(store, ATTN, attn, &member_refs, &item_row, &dg);
                for (acc, extra) in member_grads.iter_mut().zip(&mg) {
                    for (a, &b) in acc.iter_mut().zip(extra) {
                        *a += b;
                    }
                }
                for (k, &v) in di2.iter().enumerate() {
                    di[k] += v;
                }
            }
        }

        for (&u, mg) in members.iter().zip(&member_grads) {
            for (k, &v) in mg.iter().enumerate() {
                store.grad_mut(USER_EMB).row_mut(u as usize)[k] += v;
            }
        }
        for (k, &v) in di.iter().enumerate() {
            store.grad_mut(ITEM_EMB).row_mut(item as usize)[k] += v;
        }
        Ok(())
    }

    /// Score a (user, item) pair through the shared head.
    pub fn predict_user(
        &self,
        store: &ParamStore,
        user: UserId,
        item: ItemId,
    ) -> Result<(f64, UserCache)> {
        if (user as usize) >= self.dims.n_users {
            return Err(Error::DanglingId {
                kind: "user",
                id: user as u64,
            });
        }
        self.check_item(item)?;
        let u = store.value(USER_EMB).row(user as usize);
        let i = store.value(ITEM_EMB).row(item as usize);
        let e = pool(u, i);
        let (y, mlp) = self.head.forward_scalar(store, HEAD, &e);
        Ok((y, UserCache { mlp }))
    }

    /// Accumulate gradients for one user prediction.
    pub fn backward_user(
        &self,
        store: &mut ParamStore,
        user: UserId,
        item: ItemId,
        cache: &UserCache,
        upstream: f64,
    ) -> Result<()> {
        if (user as usize) >= self.dims.n_users {
            return Err(Error::DanglingId {
                kind: "user",
                id: user as u64,
            });
        }
        self.check_item(item)?;
        let u_row = store.value(USER_EMB).row(user as usize).to_vec();
        let i_row = store.value(ITEM_EMB).row(item as usize).to_vec();
        let de = self.head.backward_scalar(store, HEAD, &cache.mlp, upstream);
        let (du, di) = pool_backward(&de, &u_row, &i_row);
        for (k, &v) in du.iter().enumerate() {
            store.grad_mut(USER_EMB).row_mut(user as usize)[k] += v;
        }
        for (k, &v) in di.iter().enumerate() {
            store.grad_mut(ITEM_EMB).row_mut(item as usize)[k] += v;
        }
        Ok(())
    }
}
