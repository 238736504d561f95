//! The training loop: epochs, batching, negative sampling, validation, and
//! early stopping.
//!
//! Every epoch shuffles both interaction streams with seeded generators,
//! draws fresh training negatives from per-positive seed streams, and
//! alternates group-item and user-item batches so neither branch starves.
//! Gradients are averaged over the batch and applied with RMSprop. A held-out
//! slice of the group interactions scores each epoch; the best-scoring
//! parameters are the ones returned.

use crate::data::{
    sample_negatives_for_row, Dataset, FeedbackKind, GroupId, Interaction, ItemId, UserId,
};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_ranking, evaluate_regression, rank_of_first, EvalReport};
use crate::nn::ParamStore;
use crate::predictors::{
    popularity_counts, AggregatorKind, GroupCache, GroupPredictor, ModelKind, NcfCache, NcfModel,
    PredictorDims, ScoreCompose, TrainedModel, UserCache,
};
use crate::rng::{stream_rng, tag};
use crate::training::losses::{bce_loss, mse_loss, pairwise_loss, LossKind};
use rand::seq::SliceRandom;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Instant;

/// Validation ranking cutoff: HR@10 drives implicit early stopping.
const VAL_K: usize = 10;

/// Hyperparameters and bookkeeping knobs for one training run.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    /// Embedding width.
    pub d: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Weight ceiling for price-adaptive aggregation.
    pub beta: f64,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Fraction of group interactions held out for validation.
    pub val_fraction: f64,
    /// Training negatives drawn per positive (implicit feedback).
    pub negatives_per_positive: usize,
    pub loss: LossKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            d: 8,
            batch_size: 256,
            learning_rate: 1e-4,
            beta: 5.0,
            epochs: 30,
            patience: 5,
            val_fraction: 0.1,
            negatives_per_positive: 1,
            loss: LossKind::Pairwise,
            seed: 17,
        }
    }
}

impl TrainConfig {
    /// Defaults matched to the model family and feedback kind: pairwise loss
    /// at lr 1e-4 for implicit runs (binary cross-entropy for the
    /// virtual-user models), squared error at lr 1e-3 for explicit runs.
    pub fn for_model(kind: ModelKind, feedback: FeedbackKind) -> Self {
        let mut config = TrainConfig::default();
        match feedback {
            FeedbackKind::Implicit => {
                config.loss = match kind {
                    ModelKind::Ncf | ModelKind::NcfAvg | ModelKind::NcfExp => LossKind::Bce,
                    _ => LossKind::Pairwise,
                };
                config.learning_rate = 1e-4;
            }
            FeedbackKind::Explicit => {
                config.loss = LossKind::Mse;
                config.learning_rate = 1e-3;
            }
        }
        config
    }
}

/// Per-epoch training record.
#[derive(Clone, Debug)]
pub struct EpochStats {
    /// 1-based epoch index.
    pub epoch: usize,
    /// Mean per-sample loss over the epoch.
    pub train_loss: f64,
    pub val_metric: f64,
    /// Wall-clock seconds since training started, measured at epoch end.
    pub seconds: f64,
}

/// Full record of one training run.
#[derive(Clone, Debug)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
    /// Epoch whose parameters were kept (1-based; 0 when nothing trained).
    pub best_epoch: usize,
    pub val_metric_name: String,
    /// Whether a larger validation metric is an improvement.
    pub higher_is_better: bool,
}

impl TrainLog {
    fn empty() -> Self {
        TrainLog {
            epochs: Vec::new(),
            best_epoch: 0,
            val_metric_name: "none".into(),
            higher_is_better: true,
        }
    }
}

/// Epoch table as TSV. Timing lives in [`write_timings`] so that repeated
/// runs of the same seed produce byte-identical tables.
pub fn write_trainlog(path: &Path, log: &TrainLog) -> Result<()> {
    let mut out = String::from("epoch\ttrain_loss\tval_metric\n");
    for e in &log.epochs {
        out.push_str(&format!("{}\t{}\t{}\n", e.epoch, e.train_loss, e.val_metric));
    }
    std::fs::write(path, out).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Cumulative wall-clock seconds per epoch.
pub fn write_timings(path: &Path, log: &TrainLog) -> Result<()> {
    let mut out = String::from("epoch\tcumulative_seconds\n");
    for e in &log.epochs {
        out.push_str(&format!("{}\t{:.3}\n", e.epoch, e.seconds));
    }
    std::fs::write(path, out).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Which embedding row a training sample drives.
#[derive(Clone, Copy, Debug)]
enum Row {
    Group(GroupId),
    User(UserId),
}

/// One unit of work inside a batch.
#[derive(Clone, Debug)]
struct TrainSample {
    row: Row,
    item: ItemId,
    /// Paired negative for the margin loss.
    neg: Option<ItemId>,
    /// Label (binary cross-entropy) or rating (squared error).
    target: f64,
}

/// The trainable network behind a model kind.
enum Net {
    Grouped(GroupPredictor),
    Ncf {
        model: NcfModel,
        compose: Option<ScoreCompose>,
    },
}

enum Cache {
    Group(GroupCache),
    User(UserCache),
    Ncf(NcfCache),
}

impl Net {
    fn init_params(&self, seed: u64) -> ParamStore {
        match self {
            Net::Grouped(p) => p.init_params(seed),
            Net::Ncf { model, .. } => model.init_params(seed),
        }
    }

    /// Whether group interactions feed gradient updates. The score-composed
    /// variants train on user-item data alone.
    fn trains_group_branch(&self) -> bool {
        !matches!(self, Net::Ncf { compose: Some(_), .. })
    }

    fn forward(&self, store: &ParamStore, ds: &Dataset, row: Row, item: ItemId) -> Result<(f64, Cache)> {
        match (self, row) {
            (Net::Grouped(p), Row::Group(g)) => {
                let (y, _, cache) = p.predict_group(store, ds, g, item)?;
                Ok((y, Cache::Group(cache)))
            }
            (Net::Grouped(p), Row::User(u)) => {
                let (y, cache) = p.predict_user(store, u, item)?;
                Ok((y, Cache::User(cache)))
            }
            (Net::Ncf { model, .. }, Row::Group(g)) => {
                let (y, cache) = model.predict(store, model.group_row(g), item)?;
                Ok((y, Cache::Ncf(cache)))
            }
            (Net::Ncf { model, .. }, Row::User(u)) => {
                let (y, cache) = model.predict(store, model.user_row(u), item)?;
                Ok((y, Cache::Ncf(cache)))
            }
        }
    }

    fn backward(
        &self,
        store: &mut ParamStore,
        ds: &Dataset,
        row: Row,
        item: ItemId,
        cache: &Cache,
        upstream: f64,
    ) -> Result<()> {
        match (self, row, cache) {
            (Net::Grouped(p), Row::Group(g), Cache::Group(c)) => {
                p.backward_group(store, ds, g, item, c, upstream)
            }
            (Net::Grouped(p), Row::User(u), Cache::User(c)) => {
                p.backward_user(store, u, item, c, upstream)
            }
            (Net::Ncf { model, .. }, Row::Group(g), Cache::Ncf(c)) => {
                model.backward(store, model.group_row(g), item, c, upstream)
            }
            (Net::Ncf { model, .. }, Row::User(u), Cache::Ncf(c)) => {
                model.backward(store, model.user_row(u), item, c, upstream)
            }
            _ => unreachable!("cache kind never diverges from the row that made it"),
        }
    }

    /// A scoreable model over a copy of the parameters, for validation.
    fn snapshot(&self, store: &ParamStore) -> TrainedModel {
        match self {
            Net::Grouped(p) => TrainedModel::Grouped {
                predictor: GroupPredictor::new(p.dims, p.aggregator),
                store: store.clone(),
            },
            Net::Ncf { model, compose } => TrainedModel::Ncf {
                model: NcfModel::new(
                    model.n_users,
                    model.n_groups,
                    model.n_items,
                    model.d,
                    model.sigmoid_output,
                ),
                store: store.clone(),
                compose: *compose,
            },
        }
    }

    fn into_model(self, store: ParamStore) -> TrainedModel {
        match self {
            Net::Grouped(predictor) => TrainedModel::Grouped { predictor, store },
            Net::Ncf { model, compose } => TrainedModel::Ncf {
                model,
                store,
                compose,
            },
        }
    }
}

/// Train a model of the given kind. Popularity counting needs no epochs and
/// returns an empty log; every other kind runs the full loop.
pub fn train(ds: &Dataset, kind: ModelKind, config: &TrainConfig) -> Result<(TrainedModel, TrainLog)> {
    match kind {
        ModelKind::Popularity => {
            let counts = popularity_counts(&[&ds.user_item, &ds.group_item], ds.items.len());
            Ok((TrainedModel::Popularity { counts }, TrainLog::empty()))
        }
        ModelKind::Pgusa => train_grouped(
            ds,
            AggregatorKind::PriceAdaptive { beta: config.beta },
            config,
        ),
        ModelKind::Agree => train_grouped(ds, AggregatorKind::Attention, config),
        ModelKind::Ncf => train_ncf(ds, None, config),
        ModelKind::NcfAvg => train_ncf(ds, Some(ScoreCompose::Avg), config),
        ModelKind::NcfExp => train_ncf(ds, Some(ScoreCompose::Exp), config),
    }
}

/// Train an embedding-aggregation predictor with any aggregator, including
/// the uniform ablation that the model-kind list does not expose.
pub fn train_grouped(
    ds: &Dataset,
    aggregator: AggregatorKind,
    config: &TrainConfig,
) -> Result<(TrainedModel, TrainLog)> {
    let expected = match ds.feedback {
        FeedbackKind::Implicit => LossKind::Pairwise,
        FeedbackKind::Explicit => LossKind::Mse,
    };
    if config.loss != expected {
        return Err(Error::invalid(
            "training",
            format!(
                "aggregation models need the {expected} loss for {:?} feedback, got {}",
                ds.feedback, config.loss
            ),
        ));
    }
    let dims = PredictorDims {
        n_users: ds.users.len(),
        n_items: ds.items.len(),
        n_groups: ds.groups.len(),
        d: config.d,
    };
    run_loop(ds, Net::Grouped(GroupPredictor::new(dims, aggregator)), config)
}

fn train_ncf(
    ds: &Dataset,
    compose: Option<ScoreCompose>,
    config: &TrainConfig,
) -> Result<(TrainedModel, TrainLog)> {
    let expected = match ds.feedback {
        FeedbackKind::Implicit => LossKind::Bce,
        FeedbackKind::Explicit => LossKind::Mse,
    };
    if config.loss != expected {
        return Err(Error::invalid(
            "training",
            format!(
                "virtual-user models need the {expected} loss for {:?} feedback, got {}",
                ds.feedback, config.loss
            ),
        ));
    }
    let model = NcfModel::new(
        ds.users.len(),
        ds.groups.len(),
        ds.items.len(),
        config.d,
        ds.feedback == FeedbackKind::Implicit,
    );
    run_loop(ds, Net::Ncf { model, compose }, config)
}

/// Items each row interacted with in one window, for negative exclusion.
fn exclusion_sets(set: &crate::data::InteractionSet) -> BTreeMap<u32, BTreeSet<ItemId>> {
    let mut map: BTreeMap<u32, BTreeSet<ItemId>> = BTreeMap::new();
    for e in set.iter() {
        map.entry(e.row).or_default().insert(e.col);
    }
    map
}

/// Expand one branch's positives into this epoch's training samples.
/// Negative draws are keyed by (branch, epoch, row, item), so they are
/// independent of iteration and batch order.
fn epoch_samples(
    entries: &[Interaction],
    as_row: fn(u32) -> Row,
    branch_tag: u64,
    excl: &BTreeMap<u32, BTreeSet<ItemId>>,
    ds: &Dataset,
    config: &TrainConfig,
    epoch: usize,
) -> Result<Vec<TrainSample>> {
    let mut samples = Vec::new();
    match config.loss {
        LossKind::Mse => {
            for e in entries {
                samples.push(TrainSample {
                    row: as_row(e.row),
                    item: e.col,
                    neg: None,
                    target: e.value,
                });
            }
        }
        LossKind::Pairwise | LossKind::Bce => {
            let empty = BTreeSet::new();
            for e in entries {
                let mut rng =
                    stream_rng(config.seed, &[branch_tag, epoch as u64, e.row as u64, e.col as u64]);
                let negatives = sample_negatives_for_row(
                    e.row,
                    excl.get(&e.row).unwrap_or(&empty),
                    ds.items.len() as u32,
                    config.negatives_per_positive,
                    &mut rng,
                )?;
                if config.loss == LossKind::Bce {
                    samples.push(TrainSample {
                        row: as_row(e.row),
                        item: e.col,
                        neg: None,
                        target: 1.0,
                    });
                    for neg in negatives {
                        samples.push(TrainSample {
                            row: as_row(e.row),
                            item: neg,
                            neg: None,
                            target: 0.0,
                        });
                    }
                } else {
                    for neg in negatives {
                        samples.push(TrainSample {
                            row: as_row(e.row),
                            item: e.col,
                            neg: Some(neg),
                            target: 1.0,
                        });
                    }
                }
            }
        }
    }
    Ok(samples)
}

/// Fixed validation case: one held-out positive and its frozen negatives.
struct ValCase {
    group: GroupId,
    pos: ItemId,
    negatives: Vec<ItemId>,
}

fn run_loop(ds: &Dataset, net: Net, config: &TrainConfig) -> Result<(TrainedModel, TrainLog)> {
    let mut store = net.init_params(config.seed);
    let group_excl = exclusion_sets(&ds.group_item);
    let user_excl = exclusion_sets(&ds.user_item);

    // Hold out a seeded slice of the group interactions for validation.
    let mut group_entries: Vec<Interaction> = ds.group_item.iter().cloned().collect();
    {
        let mut rng = stream_rng(config.seed, &[tag("train.val_split")]);
        group_entries.shuffle(&mut rng);
    }
    let val_n = (config.val_fraction * group_entries.len() as f64).floor() as usize;
    let val_entries: Vec<Interaction> = group_entries[..val_n].to_vec();
    let group_train: Vec<Interaction> = if net.trains_group_branch() {
        group_entries[val_n..].to_vec()
    } else {
        Vec::new()
    };
    let user_entries: Vec<Interaction> = ds.user_item.iter().cloned().collect();

    // Freeze validation negatives once; exclusion covers the whole training
    // window, so held-out items never appear as their own negatives.
    let implicit = ds.feedback == FeedbackKind::Implicit;
    let empty = BTreeSet::new();
    let mut val_cases: Vec<ValCase> = Vec::with_capacity(val_n);
    if implicit {
        for e in &val_entries {
            let mut rng = stream_rng(config.seed, &[tag("train.val_neg"), e.row as u64, e.col as u64]);
            let negatives = sample_negatives_for_row(
                e.row,
                group_excl.get(&e.row).unwrap_or(&empty),
                ds.items.len() as u32,
                crate::evaluation::EVAL_NEGATIVES,
                &mut rng,
            )?;
            val_cases.push(ValCase {
                group: e.row,
                pos: e.col,
                negatives,
            });
        }
    }
    let (val_metric_name, higher_is_better) = if val_n == 0 {
        ("train_loss".to_string(), false)
    } else if implicit {
        (format!("hr@{VAL_K}"), true)
    } else {
        ("val_mse".to_string(), false)
    };

    let start = Instant::now();
    let mut log = TrainLog {
        epochs: Vec::new(),
        best_epoch: 0,
        val_metric_name,
        higher_is_better,
    };
    let mut best_store = store.clone();
    let mut best_metric = f64::NAN;
    let mut stale = 0usize;

    for epoch in 1..=config.epochs {
        let mut group_samples = epoch_samples(
            &group_train,
            Row::Group,
            tag("train.neg_group"),
            &group_excl,
            ds,
            config,
            epoch,
        )?;
        let mut user_samples = epoch_samples(
            &user_entries,
            Row::User,
            tag("train.neg_user"),
            &user_excl,
            ds,
            config,
            epoch,
        )?;
        {
            let mut rng = stream_rng(config.seed, &[tag("train.shuffle_group"), epoch as u64]);
            group_samples.shuffle(&mut rng);
            let mut rng = stream_rng(config.seed, &[tag("train.shuffle_user"), epoch as u64]);
            user_samples.shuffle(&mut rng);
        }

        // Alternate the two branches batch by batch.
        let g_chunks: Vec<&[TrainSample]> = group_samples.chunks(config.batch_size).collect();
        let u_chunks: Vec<&[TrainSample]> = user_samples.chunks(config.batch_size).collect();
        let mut batches: Vec<&[TrainSample]> = Vec::with_capacity(g_chunks.len() + u_chunks.len());
        let (mut gi, mut ui) = (0, 0);
        while gi < g_chunks.len() || ui < u_chunks.len() {
            if gi < g_chunks.len() {
                batches.push(g_chunks[gi]);
                gi += 1;
            }
            if ui < u_chunks.len() {
                batches.push(u_chunks[ui]);
                ui += 1;
            }
        }

        let mut loss_sum = 0.0;
        let mut n_samples = 0usize;
        for (batch_idx, batch) in batches.iter().enumerate() {
            let scale = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for s in *batch {
                match config.loss {
                    LossKind::Pairwise => {
                        let neg = s.neg.expect("pairwise samples carry a negative");
                        let (pos_score, pos_cache) = net.forward(&store, ds, s.row, s.item)?;
                        let (neg_score, neg_cache) = net.forward(&store, ds, s.row, neg)?;
                        let (loss, dpos, dneg) = pairwise_loss(pos_score, neg_score);
                        net.backward(&mut store, ds, s.row, s.item, &pos_cache, dpos * scale)?;
                        net.backward(&mut store, ds, s.row, neg, &neg_cache, dneg * scale)?;
                        batch_loss += loss;
                    }
                    LossKind::Mse => {
                        let (pred, cache) = net.forward(&store, ds, s.row, s.item)?;
                        let (loss, dpred) = mse_loss(s.target, pred);
                        net.backward(&mut store, ds, s.row, s.item, &cache, dpred * scale)?;
                        batch_loss += loss;
                    }
                    LossKind::Bce => {
                        let (p, cache) = net.forward(&store, ds, s.row, s.item)?;
                        let (loss, dlogit) = bce_loss(s.target, p);
                        net.backward(&mut store, ds, s.row, s.item, &cache, dlogit * scale)?;
                        batch_loss += loss;
                    }
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss diverged at epoch {epoch}, batch {batch_idx} (loss {batch_loss})"
                )));
            }
            store.rmsprop_step(config.learning_rate).map_err(|e| match e {
                Error::Numeric(msg) => {
                    Error::Numeric(format!("epoch {epoch}, batch {batch_idx}: {msg}"))
                }
                other => other,
            })?;
            loss_sum += batch_loss;
            n_samples += batch.len();
        }
        let train_loss = if n_samples == 0 {
            0.0
        } else {
            loss_sum / n_samples as f64
        };

        let val_metric = if val_n == 0 {
            train_loss
        } else {
            let snapshot = net.snapshot(&store);
            if implicit {
                let hits: usize = val_cases
                    .iter()
                    .map(|case| -> Result<usize> {
                        let mut candidates = Vec::with_capacity(case.negatives.len() + 1);
                        candidates.push(case.pos);
                        candidates.extend_from_slice(&case.negatives);
                        let scores = candidates
                            .iter()
                            .map(|&item| snapshot.score_group(ds, case.group, item))
                            .collect::<Result<Vec<f64>>>()?;
                        Ok(usize::from(rank_of_first(&scores, &candidates) <= VAL_K))
                    })
                    .sum::<Result<usize>>()?;
                hits as f64 / val_cases.len() as f64
            } else {
                let se: f64 = val_entries
                    .iter()
                    .map(|e| -> Result<f64> {
                        let pred = snapshot.score_group(ds, e.row, e.col)?;
                        Ok((e.value - pred) * (e.value - pred))
                    })
                    .sum::<Result<f64>>()?;
                se / val_entries.len() as f64
            }
        };

        log.epochs.push(EpochStats {
            epoch,
            train_loss,
            val_metric,
            seconds: start.elapsed().as_secs_f64(),
        });
        log::info!(
            "epoch {epoch}: train_loss {train_loss:.6} {} {val_metric:.6}",
            log.val_metric_name
        );

        let improved = best_metric.is_nan()
            || (log.higher_is_better && val_metric > best_metric)
            || (!log.higher_is_better && val_metric < best_metric);
        if improved {
            best_metric = val_metric;
            best_store = store.clone();
            log.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                log::info!("stopping early after epoch {epoch}: no improvement in {stale} epochs");
                break;
            }
        }
    }

    if config.epochs == 0 {
        best_store = store;
    }
    Ok((net.into_model(best_store), log))
}

/// Train and evaluate one price-adaptive model per ceiling value, sharing
/// seeds and every other hyperparameter, and report test metrics per value.
pub fn sweep_beta(
    ds: &Dataset,
    betas: &[f64],
    config: &TrainConfig,
    ks: &[usize],
    eval_seed: u64,
) -> Result<Vec<(f64, EvalReport)>> {
    let mut rows = Vec::with_capacity(betas.len());
    for &beta in betas {
        let mut cfg = config.clone();
        cfg.beta = beta;
        let (model, _) = train_grouped(ds, AggregatorKind::PriceAdaptive { beta }, &cfg)?;
        let report = match ds.feedback {
            FeedbackKind::Implicit => {
                evaluate_ranking(&model, ds, &ds.group_item_test, ks, eval_seed, false)?.0
            }
            FeedbackKind::Explicit => evaluate_regression(&model, ds, &ds.group_item_test)?,
        };
        log::info!("beta {beta}: {}", report.summary());
        rows.push((beta, report));
    }
    Ok(rows)
}

/// Sweep results as a TSV table, one row per ceiling value.
pub fn write_sweep_table(path: &Path, rows: &[(f64, EvalReport)]) -> Result<()> {
    let mut out = String::from("beta");
    let names = rows
        .first()
        .map(|(_, r)| r.metric_names())
        .unwrap_or_default();
    for name in &names {
        out.push('\t');
        out.push_str(name);
    }
    out.push('\n');
    for (beta, report) in rows {
        out.push_str(&beta.to_string());
        for name in &names {
            out.push('\t');
            match report.metric(name) {
                Some(v) => out.push_str(&v.to_string()),
                None => out.push('-'),
            }
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}
