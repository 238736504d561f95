//! Sampled-negatives ranking protocol and metrics.
//!
//! For each held-out group positive, 19 items the group never interacted
//! with are sampled from a per-positive seed stream, the model scores all 20
//! candidates, and the positive's rank (descending score, ascending item id
//! on ties) feeds HR@K and NDCG@K. Explicit-feedback test sets are scored
//! with MSE and MAPE instead. Parallel evaluation merges results in
//! test-case order, so outputs are byte-identical at any thread count.

use crate::aggregation::MemberWeightRecord;
use crate::data::{
    sample_negatives_for_row, Dataset, FeedbackKind, GroupId, InteractionSet, ItemId,
};
use crate::error::{Error, Result};
use crate::predictors::TrainedModel;
use crate::rng::stream_rng;
use rayon::prelude::*;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

/// Candidates sampled for evaluation alongside each positive.
pub const EVAL_NEGATIVES: usize = 19;

/// One scored test case: the positive, its sampled rivals, and the rank.
#[derive(Clone, Debug)]
pub struct RankedResult {
    pub group_id: GroupId,
    pub pos_item: ItemId,
    /// Positive first, then the 19 sampled negatives.
    pub candidates: Vec<ItemId>,
    /// Scores aligned with `candidates`.
    pub scores: Vec<f64>,
    /// 1-based rank of the positive among the candidates.
    pub rank_of_positive: usize,
    pub weights: Option<MemberWeightRecord>,
}

/// Metrics over one evaluation run. Ranking metrics are present for
/// implicit-feedback runs, regression metrics for explicit-feedback runs.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub hr_at: BTreeMap<usize, f64>,
    pub ndcg_at: BTreeMap<usize, f64>,
    pub mse: Option<f64>,
    pub mape: Option<f64>,
    pub n_test_cases: usize,
}

/// 1-based rank of the first entry among all of them: candidates with a
/// strictly higher score rank above it, as do equal scorers with a smaller
/// item id.
pub fn rank_of_first(scores: &[f64], ids: &[ItemId]) -> usize {
    assert_eq!(scores.len(), ids.len());
    assert!(!scores.is_empty());
    let (pos_score, pos_id) = (scores[0], ids[0]);
    1 + scores
        .iter()
        .zip(ids)
        .skip(1)
        .filter(|&(&s, &i)| s > pos_score || (s == pos_score && i < pos_id))
        .count()
}

/// HR@K and NDCG@K means over a set of 1-based ranks.
pub fn hr_ndcg_from_ranks(
    ranks: &[usize],
    ks: &[usize],
) -> (BTreeMap<usize, f64>, BTreeMap<usize, f64>) {
    let n = ranks.len().max(1) as f64;
    let mut hr = BTreeMap::new();
    let mut ndcg = BTreeMap::new();
    for &k in ks {
        let hits = ranks.iter().filter(|&&r| r <= k).count();
        let gain: f64 = ranks
            .iter()
            .filter(|&&r| r <= k)
            .map(|&r| 1.0 / ((r + 1) as f64).log2())
            .sum();
        hr.insert(k, hits as f64 / n);
        ndcg.insert(k, gain / n);
    }
    (hr, ndcg)
}

/// Items each group ever interacted with, across both windows; the exclusion
/// set for evaluation negatives.
fn group_exclusions(ds: &Dataset) -> BTreeMap<GroupId, BTreeSet<ItemId>> {
    let mut excl: BTreeMap<GroupId, BTreeSet<ItemId>> = BTreeMap::new();
    for e in ds.group_item.iter().chain(ds.group_item_test.iter()) {
        excl.entry(e.row).or_default().insert(e.col);
    }
    excl
}

/// Run the 20-candidate ranking protocol over `test`. Negatives come from
/// `stream_rng(seed, [row, col])` per positive, so evaluating more positives
/// never changes the candidates of existing ones. `with_weights` attaches
/// per-member aggregation weights where the model has them.
pub fn evaluate_ranking(
    model: &TrainedModel,
    ds: &Dataset,
    test: &InteractionSet,
    ks: &[usize],
    seed: u64,
    with_weights: bool,
) -> Result<(EvalReport, Vec<RankedResult>)> {
    if ds.feedback != FeedbackKind::Implicit {
        return Err(Error::invalid(
            "evaluation",
            "the ranking protocol needs implicit feedback; use regression metrics for ratings",
        ));
    }
    let excl = group_exclusions(ds);
    let empty = BTreeSet::new();
    let positives: Vec<(GroupId, ItemId)> = test.iter().map(|e| (e.row, e.col)).collect();

    let results: Vec<RankedResult> = positives
        .par_iter()
        .map(|&(group, pos)| -> Result<RankedResult> {
            let mut rng = stream_rng(seed, &[group as u64, pos as u64]);
            let excluded = excl.get(&group).unwrap_or(&empty);
            let negatives = sample_negatives_for_row(
                group,
                excluded,
                ds.items.len() as u32,
                EVAL_NEGATIVES,
                &mut rng,
            )?;
            let mut candidates = Vec::with_capacity(EVAL_NEGATIVES + 1);
            candidates.push(pos);
            candidates.extend_from_slice(&negatives);
            let scores = candidates
                .iter()
                .map(|&item| model.score_group(ds, group, item))
                .collect::<Result<Vec<f64>>>()?;
            let rank = rank_of_first(&scores, &candidates);
            let weights = if with_weights {
                model.member_weights(ds, group, pos)?
            } else {
                None
            };
            Ok(RankedResult {
                group_id: group,
                pos_item: pos,
                candidates,
                scores,
                rank_of_positive: rank,
                weights,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let ranks: Vec<usize> = results.iter().map(|r| r.rank_of_positive).collect();
    let (hr_at, ndcg_at) = hr_ndcg_from_ranks(&ranks, ks);
    Ok((
        EvalReport {
            hr_at,
            ndcg_at,
            mse: None,
            mape: None,
            n_test_cases: results.len(),
        },
        results,
    ))
}

/// Score an explicit-feedback test set with MSE and MAPE.
pub fn evaluate_regression(
    model: &TrainedModel,
    ds: &Dataset,
    test: &InteractionSet,
) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::invalid("evaluation", "empty test set"));
    }
    let zero_rows: Vec<String> = test
        .iter()
        .filter(|e| e.value == 0.0)
        .map(|e| format!("({}, {})", e.row, e.col))
        .collect();
    if !zero_rows.is_empty() {
        return Err(Error::invalid(
            "mape",
            format!(
                "true value is zero for {} test entries: {}",
                zero_rows.len(),
                zero_rows.join(", ")
            ),
        ));
    }

    let entries: Vec<_> = test.iter().cloned().collect();
    let per_case: Vec<(f64, f64)> = entries
        .par_iter()
        .map(|e| -> Result<(f64, f64)> {
            let pred = model.score_group(ds, e.row, e.col)?;
            let err = e.value - pred;
            Ok((err * err, err.abs() / e.value))
        })
        .collect::<Result<Vec<_>>>()?;

    let n = per_case.len() as f64;
    let mse = per_case.iter().map(|c| c.0).sum::<f64>() / n;
    let mape = per_case.iter().map(|c| c.1).sum::<f64>() / n;
    Ok(EvalReport {
        hr_at: BTreeMap::new(),
        ndcg_at: BTreeMap::new(),
        mse: Some(mse),
        mape: Some(mape),
        n_test_cases: per_case.len(),
    })
}

/// All items sorted by model score for one group, descending, ascending item
/// id on ties.
pub fn rank_all_items(model: &TrainedModel, ds: &Dataset, group: GroupId) -> Result<Vec<ItemId>> {
    let mut scored: Vec<(ItemId, f64)> = (0..ds.items.len() as u32)
        .map(|item| Ok((item, model.score_group(ds, group, item)?)))
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    Ok(scored.into_iter().map(|(item, _)| item).collect())
}

/// EvalReport as a two-column TSV.
pub fn write_eval_report(path: &Path, report: &EvalReport) -> Result<()> {
    std::fs::write(path, report.to_tsv()).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

impl EvalReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("metric\tvalue\n");
        for (k, v) in &self.hr_at {
            out.push_str(&format!("hr@{k}\t{v}\n"));
        }
        for (k, v) in &self.ndcg_at {
            out.push_str(&format!("ndcg@{k}\t{v}\n"));
        }
        if let Some(mse) = self.mse {
            out.push_str(&format!("mse\t{mse}\n"));
        }
        if let Some(mape) = self.mape {
            out.push_str(&format!("mape\t{mape}\n"));
        }
        out.push_str(&format!("n_test_cases\t{}\n", self.n_test_cases));
        out
    }

    /// Metric names in TSV order, for table headers and run comparison.
    pub fn metric_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.hr_at.keys().map(|k| format!("hr@{k}")).collect();
        names.extend(self.ndcg_at.keys().map(|k| format!("ndcg@{k}")));
        if self.mse.is_some() {
            names.push("mse".into());
        }
        if self.mape.is_some() {
            names.push("mape".into());
        }
        names
    }

    /// Value of a named metric, if present.
    pub fn metric(&self, name: &str) -> Option<f64> {
        if let Some(k) = name.strip_prefix("hr@") {
            return k.parse().ok().and_then(|k: usize| self.hr_at.get(&k).copied());
        }
        if let Some(k) = name.strip_prefix("ndcg@") {
            return k.parse().ok().and_then(|k: usize| self.ndcg_at.get(&k).copied());
        }
        match name {
            "mse" => self.mse,
            "mape" => self.mape,
            _ => None,
        }
    }

    /// Short human-readable block for logs.
    pub fn summary(&self) -> String {
        let mut parts = Vec::new();
        for name in self.metric_names() {
            parts.push(format!("{name}={:.4}", self.metric(&name).unwrap()));
        }
        format!("{} over {} test cases", parts.join(" "), self.n_test_cases)
    }
}

/// Ranked-candidate dump, one row per test case.
pub fn write_rankings(path: &Path, results: &[RankedResult]) -> Result<()> {
    let mut out = String::from("group_id\tpos_item\trank\tcandidates\tscores\n");
    for r in results {
        let cands: Vec<String> = r.candidates.iter().map(|c| c.to_string()).collect();
        let scores: Vec<String> = r.scores.iter().map(|s| s.to_string()).collect();
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            r.group_id,
            r.pos_item,
            r.rank_of_positive,
            cands.join(","),
            scores.join(",")
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Member-weight dump, one row per (group, item, member).
pub fn write_member_weights(path: &Path, records: &[MemberWeightRecord]) -> Result<()> {
    let mut out = String::from("group_id\titem_id\tuser_id\tweight\n");
    for rec in records {
        for &(user, w) in &rec.weights {
            out.push_str(&format!("{}\t{}\t{}\t{}\n", rec.group_id, rec.item_id, user, w));
        }
    }
    std::fs::write(path, out).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, GenConfig, Interaction};
    use crate::predictors::popularity_rank;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn small_synth(seed: u64) -> Dataset {
        let config = GenConfig {
            n_users: 80,
            n_items: 60,
            n_groups: 3,
            group_size: 20,
            positives_per_group: 30,
            heavy_purchases: (15, 20),
            ..GenConfig::default()
        };
        generate_synthetic(&config, seed).unwrap().dataset
    }

    fn popularity_over(ds: &Dataset) -> TrainedModel {
        let counts =
            crate::predictors::popularity_counts(&[&ds.user_item, &ds.group_item], ds.items.len());
        TrainedModel::Popularity { counts }
    }

    #[test]
    fn rank_counts_strictly_better_and_tied_smaller_ids() {
        // Positive is item 7 with score 0.5.
        let ids = vec![7, 3, 9, 1];
        assert_eq!(rank_of_first(&[0.5, 0.9, 0.1, 0.2], &ids), 2);
        // Tie with smaller id (3) outranks; tie with larger id (9) does not.
        assert_eq!(rank_of_first(&[0.5, 0.5, 0.5, 0.2], &ids), 2);
        assert_eq!(rank_of_first(&[0.9, 0.1, 0.1, 0.1], &ids), 1);
        assert_eq!(rank_of_first(&[0.0, 0.1, 0.2, 0.3], &ids), 4);
    }

    #[test]
    fn single_case_rank_three_metrics() {
        let (hr, ndcg) = hr_ndcg_from_ranks(&[3], &[1, 10]);
        assert_eq!(hr[&1], 0.0);
        assert_eq!(hr[&10], 1.0);
        // 1 / log2(4) = 0.5.
        assert_abs_diff_eq!(ndcg[&10], 0.5, epsilon = 1e-12);
        assert_eq!(ndcg[&1], 0.0);
    }

    #[test]
    fn ndcg_matches_brute_force_dcg_over_idcg() {
        // Single relevant item: DCG = 1/log2(rank+1), IDCG = 1/log2(2) = 1.
        for rank in 1..=20 {
            let (_, ndcg) = hr_ndcg_from_ranks(&[rank], &[20]);
            let dcg = 1.0 / ((rank as f64) + 1.0).log2();
            let idcg = 1.0 / 2.0_f64.log2();
            assert_abs_diff_eq!(ndcg[&20], dcg / idcg, epsilon = 1e-12);
        }
    }

    #[test]
    fn hr_is_nondecreasing_in_k() {
        let ranks = [1, 4, 7, 20, 2, 13];
        let ks: Vec<usize> = (1..=20).collect();
        let (hr, _) = hr_ndcg_from_ranks(&ranks, &ks);
        let mut prev = 0.0;
        for k in 1..=20 {
            assert!(hr[&k] >= prev);
            prev = hr[&k];
        }
        assert_eq!(hr[&20], 1.0);
    }

    #[test]
    fn random_scorer_ranks_are_uniform() {
        // 4000 cases of 20 iid scores; the rank histogram should pass a
        // 20-cell goodness-of-fit check (critical value 30.14 at df 19, 5%).
        let mut rng = stream_rng(99, &[1]);
        let mut hist = [0usize; 20];
        let cases = 4000;
        for _ in 0..cases {
            let scores: Vec<f64> = (0..20).map(|_| rng.gen::<f64>()).collect();
            let ids: Vec<ItemId> = (0..20).collect();
            hist[rank_of_first(&scores, &ids) - 1] += 1;
        }
        let expected = cases as f64 / 20.0;
        let stat: f64 = hist
            .iter()
            .map(|&o| {
                let d = o as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(stat < 30.14, "rank histogram not uniform: chi2 = {stat}, {hist:?}");
    }

    #[test]
    fn evaluation_is_bit_reproducible_and_thread_invariant() {
        let ds = small_synth(5);
        let model = popularity_over(&ds);
        let run = || {
            evaluate_ranking(&model, &ds, &ds.group_item_test, &[1, 5, 10], 42, false).unwrap()
        };
        let (a, ra) = run();
        let (b, rb) = run();
        assert_eq!(a, b);
        assert_eq!(ra.len(), rb.len());
        for (x, y) in ra.iter().zip(&rb) {
            assert_eq!(x.candidates, y.candidates);
            let xb: Vec<u64> = x.scores.iter().map(|s| s.to_bits()).collect();
            let yb: Vec<u64> = y.scores.iter().map(|s| s.to_bits()).collect();
            assert_eq!(xb, yb);
        }

        // One worker must reproduce the default pool's bytes.
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let (c, rc) = pool.install(run);
        assert_eq!(a, c);
        for (x, y) in ra.iter().zip(&rc) {
            assert_eq!(x.candidates, y.candidates);
        }
    }

    #[test]
    fn metrics_are_invariant_under_monotone_score_transforms() {
        let ds = small_synth(6);
        let counts = crate::predictors::popularity_counts(
            &[&ds.user_item, &ds.group_item],
            ds.items.len(),
        );
        let squared: Vec<u64> = counts.iter().map(|&c| c * c).collect();
        let a = evaluate_ranking(
            &TrainedModel::Popularity { counts },
            &ds,
            &ds.group_item_test,
            &[1, 5, 10],
            7,
            false,
        )
        .unwrap()
        .0;
        let b = evaluate_ranking(
            &TrainedModel::Popularity { counts: squared },
            &ds,
            &ds.group_item_test,
            &[1, 5, 10],
            7,
            false,
        )
        .unwrap()
        .0;
        assert_eq!(a, b);
    }

    #[test]
    fn adding_positives_does_not_shift_existing_candidates() {
        let ds = small_synth(8);
        let model = popularity_over(&ds);
        let full = ds.group_item_test.clone();
        let partial = InteractionSet::new(full.iter().take(5).cloned().collect()).unwrap();
        let (_, r_full) =
            evaluate_ranking(&model, &ds, &full, &[10], 21, false).unwrap();
        let (_, r_partial) =
            evaluate_ranking(&model, &ds, &partial, &[10], 21, false).unwrap();
        for (a, b) in r_partial.iter().zip(&r_full) {
            assert_eq!(a.candidates, b.candidates);
        }
    }

    #[test]
    fn too_few_eligible_negatives_is_an_error() {
        let mut ds = small_synth(9);
        // Shrink the catalog below 20 eligible: keep items but exclude all
        // except 18 via a group that interacted with everything else.
        let group = 0u32;
        let mut entries: Vec<Interaction> = ds.group_item.iter().cloned().collect();
        for item in 0..(ds.items.len() as u32 - 19) {
            if !ds.group_item.contains(group, item) && !ds.group_item_test.contains(group, item) {
                entries.push(Interaction { row: group, col: item, value: 1.0, timestamp: None });
            }
        }
        ds.group_item = InteractionSet::new(entries).unwrap();
        let model = popularity_over(&ds);
        let test: Vec<Interaction> = ds
            .group_item_test
            .iter()
            .filter(|e| e.row == group)
            .cloned()
            .collect();
        assert!(!test.is_empty());
        let test = InteractionSet::new(test).unwrap();
        let err = evaluate_ranking(&model, &ds, &test, &[10], 3, false).unwrap_err();
        assert!(matches!(err, Error::NotEnoughNegatives { .. }), "{err:?}");
    }

    #[test]
    fn regression_metrics_match_hand_computation() {
        // y = [2, 4], predictions forced constant 3 by a popularity model
        // with equal counts: MSE = (1+1)/2 = 1, MAPE = (0.5 + 0.25)/2 = 0.375.
        let mut ds = small_synth(11);
        ds.feedback = FeedbackKind::Explicit;
        let test = InteractionSet::new(vec![
            Interaction { row: 0, col: 1, value: 2.0, timestamp: None },
            Interaction { row: 1, col: 2, value: 4.0, timestamp: None },
        ])
        .unwrap();
        let model = TrainedModel::Popularity {
            counts: vec![3; ds.items.len()],
        };
        let report = evaluate_regression(&model, &ds, &test).unwrap();
        assert_abs_diff_eq!(report.mse.unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(report.mape.unwrap(), 0.375, epsilon = 1e-12);
        assert_eq!(report.n_test_cases, 2);
        assert!(report.hr_at.is_empty());
    }

    #[test]
    fn perfect_predictions_zero_both_errors() {
        let mut ds = small_synth(12);
        ds.feedback = FeedbackKind::Explicit;
        let test = InteractionSet::new(vec![Interaction {
            row: 0,
            col: 1,
            value: 5.0,
            timestamp: None,
        }])
        .unwrap();
        let model = TrainedModel::Popularity {
            counts: vec![5; ds.items.len()],
        };
        let report = evaluate_regression(&model, &ds, &test).unwrap();
        assert_eq!(report.mse.unwrap(), 0.0);
        assert_eq!(report.mape.unwrap(), 0.0);
    }

    #[test]
    fn zero_true_value_errors_and_names_the_rows() {
        let ds = small_synth(13);
        let test = InteractionSet::new(vec![Interaction {
            row: 2,
            col: 7,
            value: 0.0,
            timestamp: None,
        }])
        .unwrap();
        let model = TrainedModel::Popularity { counts: vec![1; ds.items.len()] };
        let err = evaluate_regression(&model, &ds, &test).unwrap_err();
        assert!(err.to_string().contains("(2, 7)"), "{err}");
    }

    #[test]
    fn constant_at_mean_minimizes_mse() {
        let mut ds = small_synth(14);
        ds.feedback = FeedbackKind::Explicit;
        let test = InteractionSet::new(vec![
            Interaction { row: 0, col: 1, value: 2.0, timestamp: None },
            Interaction { row: 1, col: 2, value: 4.0, timestamp: None },
        ])
        .unwrap();
        let mse_for = |c: u64| {
            let model = TrainedModel::Popularity { counts: vec![c; ds.items.len()] };
            evaluate_regression(&model, &ds, &test).unwrap().mse.unwrap()
        };
        assert!(mse_for(3) < mse_for(2));
        assert!(mse_for(3) < mse_for(4));
    }

    #[test]
    fn rank_all_items_agrees_with_popularity_order() {
        let ds = small_synth(15);
        let counts = crate::predictors::popularity_counts(
            &[&ds.user_item, &ds.group_item],
            ds.items.len(),
        );
        let model = TrainedModel::Popularity { counts: counts.clone() };
        let ranked = rank_all_items(&model, &ds, 0).unwrap();
        let all: Vec<ItemId> = (0..ds.items.len() as u32).collect();
        assert_eq!(ranked, popularity_rank(&counts, &all));
        assert_eq!(ranked.len(), ds.items.len());
    }

    #[test]
    fn report_tsv_and_metric_lookup_round_trip() {
        let ds = small_synth(16);
        let model = popularity_over(&ds);
        let (report, _) =
            evaluate_ranking(&model, &ds, &ds.group_item_test, &[1, 10], 9, false).unwrap();
        let tsv = report.to_tsv();
        assert!(tsv.starts_with("metric\tvalue\n"));
        for name in report.metric_names() {
            let value = report.metric(&name).unwrap();
            assert!(tsv.contains(&format!("{name}\t{value}\n")), "{name} missing");
        }
        assert_eq!(report.metric_names(), vec!["hr@1", "hr@10", "ndcg@1", "ndcg@10"]);
        assert!(report.metric("hr@3").is_none());
    }

    #[test]
    fn weight_dump_has_one_row_per_member() {
        let rec = MemberWeightRecord {
            group_id: 2,
            item_id: 5,
            weights: vec![(10, 2.5), (11, 4.0)],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("weights.tsv");
        write_member_weights(&path, &[rec]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "group_id\titem_id\tuser_id\tweight\n2\t5\t10\t2.5\n2\t5\t11\t4\n"
        );
    }
}
