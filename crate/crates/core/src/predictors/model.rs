//! Model kinds, the trained-model wrapper, and its persistence.

use crate::aggregation::{aggregate_scores_avg, aggregate_scores_exp, MemberWeightRecord};
use crate::data::{Dataset, FeedbackKind, GroupId, ItemId, UserId};
use crate::error::{Error, Result};
use crate::nn::{load_checkpoint, save_checkpoint, CheckpointMeta, ParamStore, Tensor2};
use crate::predictors::group::{AggregatorKind, GroupPredictor, PredictorDims};
use crate::predictors::ncf::NcfModel;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// Trainable model families selectable from the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Pgusa,
    Agree,
    Ncf,
    NcfAvg,
    NcfExp,
    Popularity,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Pgusa,
        ModelKind::Agree,
        ModelKind::Ncf,
        ModelKind::NcfAvg,
        ModelKind::NcfExp,
        ModelKind::Popularity,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Pgusa => "pgusa",
            ModelKind::Agree => "agree",
            ModelKind::Ncf => "ncf",
            ModelKind::NcfAvg => "ncf-avg",
            ModelKind::NcfExp => "ncf-exp",
            ModelKind::Popularity => "popularity",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .iter()
            .find(|k| k.as_str() == s)
            .copied()
            .ok_or_else(|| {
                Error::invalid(
                    "model",
                    format!(
                        "unknown kind `{s}`, expected one of {}",
                        ModelKind::ALL.map(|k| k.as_str()).join("|")
                    ),
                )
            })
    }
}

/// Score-level composition for models trained on user-item data only.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScoreCompose {
    /// Plain mean of member scores.
    Avg,
    /// Frequency-weighted mean of member scores.
    Exp,
}

/// A model ready to score, with enough structure to save and reload it.
#[derive(Debug)]
pub enum TrainedModel {
    Grouped {
        predictor: GroupPredictor,
        store: ParamStore,
    },
    Ncf {
        model: NcfModel,
        store: ParamStore,
        compose: Option<ScoreCompose>,
    },
    Popularity {
        counts: Vec<u64>,
    },
}

fn expect_shape(store: &ParamStore, name: &str, rows: usize, cols: usize) -> Result<()> {
    if !store.contains(name) {
        return Err(Error::CheckpointMismatch(format!("missing tensor `{name}`")));
    }
    let t = store.value(name);
    if t.rows() != rows || t.cols() != cols {
        return Err(Error::CheckpointMismatch(format!(
            "tensor `{name}` is {}x{}, expected {rows}x{cols}",
            t.rows(),
            t.cols()
        )));
    }
    Ok(())
}

impl TrainedModel {
    /// Kind string used in checkpoints and reports. The library-only uniform
    /// and hybrid aggregators get their own strings.
    pub fn kind_str(&self) -> &'static str {
        match self {
            TrainedModel::Grouped { predictor, .. } => match predictor.aggregator {
                AggregatorKind::PriceAdaptive { .. } => "pgusa",
                AggregatorKind::Attention => "agree",
                AggregatorKind::AttentionWithPrice { .. } => "pgusa-agree",
                AggregatorKind::Uniform => "uniform",
            },
            TrainedModel::Ncf { compose, .. } => match compose {
                None => "ncf",
                Some(ScoreCompose::Avg) => "ncf-avg",
                Some(ScoreCompose::Exp) => "ncf-exp",
            },
            TrainedModel::Popularity { .. } => "popularity",
        }
    }

    pub fn d(&self) -> usize {
        match self {
            TrainedModel::Grouped { predictor, .. } => predictor.dims.d,
            TrainedModel::Ncf { model, .. } => model.d,
            TrainedModel::Popularity { .. } => 0,
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            TrainedModel::Grouped { store, .. } | TrainedModel::Ncf { store, .. } => {
                store.scalar_count()
            }
            TrainedModel::Popularity { counts } => counts.len(),
        }
    }

    /// Score a (group, item) pair with whatever this model uses for groups.
    pub fn score_group(&self, ds: &Dataset, group: GroupId, item: ItemId) -> Result<f64> {
        match self {
            TrainedModel::Grouped { predictor, store } => {
                let (y, _, _) = predictor.predict_group(store, ds, group, item)?;
                Ok(y)
            }
            TrainedModel::Ncf {
                model,
                store,
                compose,
            } => {
                if (group as usize) >= ds.groups.len() {
                    return Err(Error::DanglingId {
                        kind: "group",
                        id: group as u64,
                    });
                }
                match compose {
                    None => Ok(model.predict(store, model.group_row(group), item)?.0),
                    Some(rule) => {
                        let members = &ds.groups[group as usize].members;
                        let scores = members
                            .iter()
                            .map(|&u| Ok(model.predict(store, model.user_row(u), item)?.0))
                            .collect::<Result<Vec<f64>>>()?;
                        match rule {
                            ScoreCompose::Avg => aggregate_scores_avg(&scores),
                            ScoreCompose::Exp => {
                                let freqs: Vec<f64> =
                                    members.iter().map(|&u| ds.users[u as usize].freq).collect();
                                aggregate_scores_exp(&scores, &freqs)
                            }
                        }
                    }
                }
            }
            TrainedModel::Popularity { counts } => {
                if (item as usize) >= counts.len() {
                    return Err(Error::DanglingId {
                        kind: "item",
                        id: item as u64,
                    });
                }
                Ok(counts[item as usize] as f64)
            }
        }
    }

    /// Score a (user, item) pair.
    pub fn score_user(&self, user: UserId, item: ItemId) -> Result<f64> {
        match self {
            TrainedModel::Grouped { predictor, store } => {
                Ok(predictor.predict_user(store, user, item)?.0)
            }
            TrainedModel::Ncf { model, store, .. } => {
                Ok(model.predict(store, model.user_row(user), item)?.0)
            }
            TrainedModel::Popularity { counts } => {
                if (item as usize) >= counts.len() {
                    return Err(Error::DanglingId {
                        kind: "item",
                        id: item as u64,
                    });
                }
                Ok(counts[item as usize] as f64)
            }
        }
    }

    /// Whether this model can report per-member aggregation weights.
    pub fn exposes_member_weights(&self) -> bool {
        matches!(self, TrainedModel::Grouped { .. })
    }

    /// Per-member aggregation weights for one (group, item) pair; `None` for
    /// models without member-level weights.
    pub fn member_weights(
        &self,
        ds: &Dataset,
        group: GroupId,
        item: ItemId,
    ) -> Result<Option<MemberWeightRecord>> {
        match self {
            TrainedModel::Grouped { predictor, store } => {
                let (_, weights, _) = predictor.predict_group(store, ds, group, item)?;
                let members = &ds.groups[group as usize].members;
                Ok(Some(MemberWeightRecord {
                    group_id: group,
                    item_id: item,
                    weights: members.iter().cloned().zip(weights).collect(),
                }))
            }
            _ => Ok(None),
        }
    }

    fn aggregator_label(&self) -> &'static str {
        match self {
            TrainedModel::Grouped { predictor, .. } => predictor.aggregator.label(),
            TrainedModel::Ncf { compose, .. } => match compose {
                None => "virtual-user",
                Some(ScoreCompose::Avg) => "score-avg",
                Some(ScoreCompose::Exp) => "score-exp",
            },
            TrainedModel::Popularity { .. } => "count",
        }
    }

    fn beta(&self) -> Option<f64> {
        match self {
            TrainedModel::Grouped { predictor, .. } => predictor.aggregator.beta(),
            _ => None,
        }
    }

    pub fn save(&self, path: &Path, dataset_hash: &str) -> Result<()> {
        let (store_ref, popularity_store);
        let store = match self {
            TrainedModel::Grouped { store, .. } | TrainedModel::Ncf { store, .. } => {
                store_ref = store;
                store_ref
            }
            TrainedModel::Popularity { counts } => {
                let mut s = ParamStore::new();
                s.insert_values(
                    "pop.counts",
                    Tensor2::from_values(1, counts.len(), counts.iter().map(|&c| c as f64).collect()),
                );
                popularity_store = s;
                &popularity_store
            }
        };
        let meta = CheckpointMeta {
            kind: self.kind_str().to_string(),
            d: self.d(),
            beta: self.beta(),
            dataset_hash: dataset_hash.to_string(),
            step_count: store.step_count(),
        };
        save_checkpoint(path, &meta, store)
    }

    /// Reload a model against the dataset it will score. The checkpoint must
    /// carry the dataset's hash and tensors shaped for its entity counts.
    pub fn load(path: &Path, ds: &Dataset) -> Result<TrainedModel> {
        let (meta, store) = load_checkpoint(path)?;
        let expected_hash = ds.hash_hex();
        if meta.dataset_hash != expected_hash {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint was trained on dataset {} but this dataset hashes to {}",
                meta.dataset_hash, expected_hash
            )));
        }
        let (n, m, s) = (ds.users.len(), ds.items.len(), ds.groups.len());
        let d = meta.d;

        let grouped = |store: ParamStore, aggregator: AggregatorKind| -> Result<TrainedModel> {
            let dims = PredictorDims {
                n_users: n,
                n_items: m,
                n_groups: s,
                d,
            };
            expect_shape(&store, "emb.user", n, d)?;
            expect_shape(&store, "emb.item", m, d)?;
            expect_shape(&store, "emb.group", s, d)?;
            if aggregator.uses_attention() {
                expect_shape(&store, "attn.w", d, 2 * d)?;
                expect_shape(&store, "attn.b", 1, d)?;
                expect_shape(&store, "attn.v", 1, d)?;
            }
            expect_shape(&store, "head.w0", d, 3 * d)?;
            expect_shape(&store, "head.w1", 1, d)?;
            Ok(TrainedModel::Grouped {
                predictor: GroupPredictor::new(dims, aggregator),
                store,
            })
        };

        let require_beta = || {
            meta.beta.ok_or_else(|| {
                Error::CheckpointMismatch(format!("kind `{}` requires a beta value", meta.kind))
            })
        };

        match meta.kind.as_str() {
            "pgusa" => {
                let beta = require_beta()?;
                grouped(store, AggregatorKind::PriceAdaptive { beta })
            }
            "agree" => grouped(store, AggregatorKind::Attention),
            "pgusa-agree" => {
                let beta = require_beta()?;
                grouped(store, AggregatorKind::AttentionWithPrice { beta })
            }
            "uniform" => grouped(store, AggregatorKind::Uniform),
            "ncf" | "ncf-avg" | "ncf-exp" => {
                let model = NcfModel::new(n, s, m, d, ds.feedback == FeedbackKind::Implicit);
                expect_shape(&store, "gmf.user", n + s, d)?;
                expect_shape(&store, "gmf.item", m, d)?;
                expect_shape(&store, "mlp.user", n + s, d)?;
                expect_shape(&store, "mlp.item", m, d)?;
                expect_shape(&store, "fusion.w", 1, d + d / 2)?;
                let compose = match meta.kind.as_str() {
                    "ncf" => None,
                    "ncf-avg" => Some(ScoreCompose::Avg),
                    _ => Some(ScoreCompose::Exp),
                };
                Ok(TrainedModel::Ncf {
                    model,
                    store,
                    compose,
                })
            }
            "popularity" => {
                expect_shape(&store, "pop.counts", 1, m)?;
                let counts = store
                    .value("pop.counts")
                    .values()
                    .iter()
                    .map(|&v| v as u64)
                    .collect();
                Ok(TrainedModel::Popularity { counts })
            }
            other => Err(Error::CheckpointMismatch(format!("unknown model kind `{other}`"))),
        }
    }

    /// Human-readable summary emitted beside every checkpoint.
    pub fn write_model_card(&self, path: &Path, dataset_hash: &str) -> Result<()> {
        let beta = match self.beta() {
            Some(b) => b.to_string(),
            None => "-".to_string(),
        };
        let card = format!(
            "key\tvalue\nkind\t{}\nd\t{}\naggregator\t{}\nbeta\t{}\nparam_count\t{}\ndataset_hash\t{}\n",
            self.kind_str(),
            self.d(),
            self.aggregator_label(),
            beta,
            self.param_count(),
            dataset_hash
        );
        std::fs::write(path, card).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }
}
