//! Collaborative-filtering baseline: fusion of generalized matrix
//! factorization with an MLP tower, trained on rows of a virtual-user table
//! where each group occupies one extra row after the real users.
//!
//! GMF and MLP paths keep separate embedding tables, roughly doubling the
//! embedding parameter count relative to the shared-table group predictor.

use crate::error::{Error, Result};
use crate::nn::{MlpCache, MlpSpec, ParamStore};

const GMF_USER: &str = "gmf.user";
const GMF_ITEM: &str = "gmf.item";
const MLP_USER: &str = "mlp.user";
const MLP_ITEM: &str = "mlp.item";
const TOWER: &str = "tower";
const FUSION_W: &str = "fusion.w";
const FUSION_B: &str = "fusion.b";

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Dimensions and output activation of the fusion model.
#[derive(Clone, Debug)]
pub struct NcfModel {
    pub n_users: usize,
    pub n_groups: usize,
    pub n_items: usize,
    pub d: usize,
    /// Sigmoid output for implicit feedback, identity for explicit.
    pub sigmoid_output: bool,
    tower: MlpSpec,
}

/// Forward state of one prediction, consumed by backward.
#[derive(Clone, Debug)]
pub struct NcfCache {
    /// Pre-activation fused score; the binary cross-entropy gradient applies
    /// here directly.
    pub logit: f64,
    fused: Vec<f64>,
    tower: MlpCache,
}

impl NcfModel {
    pub fn new(n_users: usize, n_groups: usize, n_items: usize, d: usize, sigmoid_output: bool) -> Self {
        assert!(d >= 2, "embedding width must be at least 2");
        NcfModel {
            n_users,
            n_groups,
            n_items,
            d,
            sigmoid_output,
            tower: MlpSpec::tower(vec![2 * d, d, d / 2]),
        }
    }

    /// Rows of the virtual-user table: every user, then every group.
    pub fn n_rows(&self) -> usize {
        self.n_users + self.n_groups
    }

    pub fn user_row(&self, user: u32) -> usize {
        user as usize
    }

    pub fn group_row(&self, group: u32) -> usize {
        self.n_users + group as usize
    }

    pub fn init_params(&self, seed: u64) -> ParamStore {
        let mut store = ParamStore::new();
        let rows = self.n_rows();
        store.insert_embedding(GMF_USER, rows, self.d, seed);
        store.insert_embedding(GMF_ITEM, self.n_items, self.d, seed);
        store.insert_embedding(MLP_USER, rows, self.d, seed);
        store.insert_embedding(MLP_ITEM, self.n_items, self.d, seed);
        self.tower.register(&mut store, TOWER, seed);
        store.insert_linear(FUSION_W, 1, self.d + self.d / 2, seed);
        store.insert_zeros(FUSION_B, 1, 1);
        store
    }

    fn check_ids(&self, row: usize, item: u32) -> Result<()> {
        if row >= self.n_rows() {
            return Err(Error::DanglingId {
                kind: "virtual-user row",
                id: row as u64,
            });
        }
        if (item as usize) >= self.n_items {
            return Err(Error::DanglingId {
                kind: "item",
                id: item as u64,
            });
        }
        Ok(())
    }

    /// Score one (virtual-user row, item) pair.
    pub fn predict(&self, store: &ParamStore, row: usize, item: u32) -> Result<(f64, NcfCache)> {
        self.check_ids(row, item)?;
        let d = self.d;
        let u_gmf = store.value(GMF_USER).row(row);
        let i_gmf = store.value(GMF_ITEM).row(item as usize);
        let gmf_vec: Vec<f64> = u_gmf.iter().zip(i_gmf).map(|(a, b)| a * b).collect();

        let u_mlp = store.value(MLP_USER).row(row);
        let i_mlp = store.value(MLP_ITEM).row(item as usize);
        let mut cat = Vec::with_capacity(2 * d);
        cat.extend_from_slice(u_mlp);
        cat.extend_from_slice(i_mlp);
        let (tower_out, tower) = self.tower.forward(store, TOWER, &cat);

        let mut fused = Vec::with_capacity(d + d / 2);
        fused.extend_from_slice(&gmf_vec);
        fused.extend_from_slice(&tower_out);
        let w = store.value(FUSION_W);
        let logit: f64 =
            w.row(0).iter().zip(&fused).map(|(a, b)| a * b).sum::<f64>() + store.value(FUSION_B).get(0, 0);

        let score = if self.sigmoid_output { sigmoid(logit) } else { logit };
        Ok((
            score,
            NcfCache {
                logit,
                fused,
                tower,
            },
        ))
    }

    /// Accumulate gradients given `d loss / d logit`. Losses differentiate
    /// with respect to the pre-activation logit (binary cross-entropy folds
    /// the sigmoid into its gradient), so no activation term appears here.
    pub fn backward(
        &self,
        store: &mut ParamStore,
        row: usize,
        item: u32,
        cache: &NcfCache,
        upstream_logit: f64,
    ) -> Result<()> {
        self.check_ids(row, item)?;
        let d = self.d;
        for (g, &x) in store
            .grad_mut(FUSION_W)
            .row_mut(0)
            .iter_mut()
            .zip(&cache.fused)
        {
            *g += upstream_logit * x;
        }
        store.grad_mut(FUSION_B).row_mut(0)[0] += upstream_logit;

        let w_row: Vec<f64> = store.value(FUSION_W).row(0).to_vec();
        let dfused: Vec<f64> = w_row.iter().map(|&wk| wk * upstream_logit).collect();

        // GMF path: gmf_vec = u . i elementwise.
        let u_gmf = store.value(GMF_USER).row(row).to_vec();
        let i_gmf = store.value(GMF_ITEM).row(item as usize).to_vec();
        for k in 0..d {
            store.grad_mut(GMF_USER).row_mut(row)[k] += dfused[k] * i_gmf[k];
            store.grad_mut(GMF_ITEM).row_mut(item as usize)[k] += dfused[k] * u_gmf[k];
        }

        // MLP path.
        let dcat = self.tower.backward(store, TOWER, &cache.tower, &dfused[d..]);
        for k in 0..d {
            store.grad_mut(MLP_USER).row_mut(row)[k] += dcat[k];
            store.grad_mut(MLP_ITEM).row_mut(item as usize)[k] += dcat[d + k];
        }
        Ok(())
    }
}
