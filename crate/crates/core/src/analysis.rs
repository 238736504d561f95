//! Influence analysis: who drove each correctly ranked recommendation, how
//! that splits by item price, and what revenue a ranking would capture.
//!
//! The core question is whether cheap items are driven by frequent buyers
//! and expensive items by occasional ones. Frequent buyers are labeled per
//! group from training purchase counts, each top-ranked test positive is
//! attributed to the member with the largest aggregation weight, and
//! two-cell goodness-of-fit checks decide whether the frequent/occasional
//! split in each price tail is too lopsided to be chance.

use crate::data::{Dataset, GroupId, InteractionSet, ItemId, UserId};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_ranking, rank_all_items};
use crate::predictors::TrainedModel;
use statrs::distribution::{ContinuousCDF, StudentsT};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

/// Critical value for a two-cell goodness-of-fit check at the 5% level
/// (one degree of freedom).
const CHI_CRITICAL: f64 = 3.84;

/// Outcome of a two-cell equal-split goodness-of-fit check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub count_a: u64,
    pub count_b: u64,
    pub critical: f64,
    /// True when the counts differ more than chance allows at the 5% level.
    pub reject_equal_split: bool,
}

/// Test whether two observed counts are consistent with a 50/50 split.
pub fn chi_square_test(count_a: u64, count_b: u64) -> Result<ChiSquareResult> {
    let total = count_a + count_b;
    if total == 0 {
        return Err(Error::invalid(
            "chi-square",
            "both counts are zero; nothing to test",
        ));
    }
    let expected = total as f64 / 2.0;
    let da = count_a as f64 - expected;
    let db = count_b as f64 - expected;
    let statistic = da * da / expected + db * db / expected;
    Ok(ChiSquareResult {
        statistic,
        count_a,
        count_b,
        critical: CHI_CRITICAL,
        reject_equal_split: statistic > CHI_CRITICAL,
    })
}

/// Members whose training purchase count strictly exceeds twice their
/// group's mean member purchase count.
pub fn label_frequent_buyers(ds: &Dataset) -> BTreeMap<GroupId, BTreeSet<UserId>> {
    let mut out = BTreeMap::new();
    for group in &ds.groups {
        let counts: Vec<u64> = group
            .members
            .iter()
            .map(|&u| ds.users[u as usize].purchase_count)
            .collect();
        let mean = counts.iter().sum::<u64>() as f64 / counts.len().max(1) as f64;
        let frequent: BTreeSet<UserId> = group
            .members
            .iter()
            .zip(&counts)
            .filter(|&(_, &c)| c as f64 > 2.0 * mean)
            .map(|(&u, _)| u)
            .collect();
        out.insert(group.group_id, frequent);
    }
    out
}

/// One correctly ranked test positive attributed to its heaviest member.
#[derive(Clone, Debug)]
pub struct InfluenceRecord {
    pub group_id: GroupId,
    pub item_id: ItemId,
    /// Member with the largest aggregation weight (smallest id on ties).
    pub user_id: UserId,
    pub weight: f64,
    pub raw_price: f64,
    /// Whether the influential member is a frequent buyer of the group.
    pub is_frequent: bool,
}

/// Attribute every rank-1 test positive to the member the aggregator
/// weighted most. Only models that expose per-member weights qualify.
pub fn extract_influence(
    model: &TrainedModel,
    ds: &Dataset,
    test: &InteractionSet,
    seed: u64,
) -> Result<Vec<InfluenceRecord>> {
    if !model.exposes_member_weights() {
        return Err(Error::invalid(
            "influence",
            "model does not expose per-member aggregation weights",
        ));
    }
    let (_, results) = evaluate_ranking(model, ds, test, &[1], seed, true)?;
    let frequent = label_frequent_buyers(ds);
    let mut records = Vec::new();
    for r in results {
        if r.rank_of_positive != 1 {
            continue;
        }
        let weights = r.weights.ok_or_else(|| {
            Error::invalid(
                "influence",
                "model does not expose per-member aggregation weights",
            )
        })?;
        let mut best: Option<(UserId, f64)> = None;
        for &(user, w) in &weights.weights {
            let better = match best {
                None => true,
                Some((bu, bw)) => w > bw || (w == bw && user < bu),
            };
            if better {
                best = Some((user, w));
            }
        }
        let (user_id, weight) = best.ok_or_else(|| Error::invalid("influence", "empty group"))?;
        let is_frequent = frequent
            .get(&r.group_id)
            .map(|set| set.contains(&user_id))
            .unwrap_or(false);
        records.push(InfluenceRecord {
            group_id: r.group_id,
            item_id: r.pos_item,
            user_id,
            weight,
            raw_price: ds.items[r.pos_item as usize].raw_price,
            is_frequent,
        });
    }
    Ok(records)
}

/// Nearest-rank percentile of a sorted slice.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.max(1) - 1]
}

fn tail_test(records: &[&InfluenceRecord], label: &str) -> Result<ChiSquareResult> {
    if records.is_empty() {
        return Err(Error::invalid(
            "price buckets",
            format!("no influence records in the {label} price tail"),
        ));
    }
    let a = records.iter().filter(|r| r.is_frequent).count() as u64;
    let b = records.len() as u64 - a;
    chi_square_test(a, b)
}

/// Split the attributed items at the 10th and 90th price percentiles and
/// test each tail's frequent/occasional split. Returns (cheap tail,
/// expensive tail).
pub fn price_bucket_tests(
    records: &[InfluenceRecord],
) -> Result<(ChiSquareResult, ChiSquareResult)> {
    if records.is_empty() {
        return Err(Error::invalid("price buckets", "no influence records"));
    }
    let mut prices: Vec<f64> = records.iter().map(|r| r.raw_price).collect();
    prices.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let p10 = percentile(&prices, 10.0);
    let p90 = percentile(&prices, 90.0);

    let cheap: Vec<&InfluenceRecord> =
        records.iter().filter(|r| r.raw_price <= p10).collect();
    let expensive: Vec<&InfluenceRecord> =
        records.iter().filter(|r| r.raw_price >= p90).collect();
    Ok((tail_test(&cheap, "cheap")?, tail_test(&expensive, "expensive")?))
}

/// One price bucket of the influence report.
#[derive(Clone, Debug)]
pub struct BucketRow {
    /// 0-based bucket index, cheapest first.
    pub bucket: usize,
    pub low_price: f64,
    pub high_price: f64,
    pub count_frequent: usize,
    pub count_occasional: usize,
    /// Share of records attributed to frequent buyers; None for empty buckets.
    pub frequent_share: Option<f64>,
}

/// Split the attributed items into ten equal-count price buckets and report
/// the frequent-buyer share of each.
pub fn decile_bucket_report(records: &[InfluenceRecord]) -> Result<Vec<BucketRow>> {
    if records.is_empty() {
        return Err(Error::invalid("price buckets", "no influence records"));
    }
    let mut by_price: Vec<&InfluenceRecord> = records.iter().collect();
    by_price.sort_by(|a, b| {
        a.raw_price
            .partial_cmp(&b.raw_price)
            .unwrap()
            .then(a.item_id.cmp(&b.item_id))
    });
    let n = by_price.len();
    let mut rows = Vec::with_capacity(10);
    for bucket in 0..10 {
        let start = bucket * n / 10;
        let end = (bucket + 1) * n / 10;
        let slice = &by_price[start..end];
        let count_frequent = slice.iter().filter(|r| r.is_frequent).count();
        let count_occasional = slice.len() - count_frequent;
        rows.push(BucketRow {
            bucket,
            low_price: slice.first().map(|r| r.raw_price).unwrap_or(f64::NAN),
            high_price: slice.last().map(|r| r.raw_price).unwrap_or(f64::NAN),
            count_frequent,
            count_occasional,
            frequent_share: if slice.is_empty() {
                None
            } else {
                Some(count_frequent as f64 / slice.len() as f64)
            },
        });
    }
    Ok(rows)
}

/// Cumulative revenue along one group's ranked item list.
#[derive(Clone, Debug, PartialEq)]
pub struct GmvCurve {
    pub group_id: GroupId,
    /// `cumulative[r - 1]` is the revenue captured by the top `r` ranks.
    pub cumulative: Vec<f64>,
}

/// Revenue a ranking would capture: at every rank holding a held-out group
/// positive, add the item's price times the number of members who bought it
/// in the held-out user window.
pub fn gmv_from_ranking(
    ranking: &[ItemId],
    ds: &Dataset,
    group: GroupId,
    max_rank: usize,
) -> Result<GmvCurve> {
    let def = ds
        .groups
        .get(group as usize)
        .ok_or(Error::DanglingId { kind: "group", id: group as u64 })?;
    if max_rank > ranking.len() {
        return Err(Error::invalid(
            "gmv",
            format!("max rank {max_rank} exceeds the {}-item ranking", ranking.len()),
        ));
    }
    let mut cumulative = Vec::with_capacity(max_rank);
    let mut total = 0.0;
    for &item in &ranking[..max_rank] {
        if ds.group_item_test.contains(group, item) {
            let buyers = def
                .members
                .iter()
                .filter(|&&u| ds.user_item_test.contains(u, item))
                .count();
            total += ds.items[item as usize].raw_price * buyers as f64;
        }
        cumulative.push(total);
    }
    Ok(GmvCurve { group_id: group, cumulative })
}

/// Score and rank the full catalog for one group, then accumulate revenue
/// along it.
pub fn gmv_curve(
    model: &TrainedModel,
    ds: &Dataset,
    group: GroupId,
    max_rank: usize,
) -> Result<GmvCurve> {
    let ranking = rank_all_items(model, ds, group)?;
    gmv_from_ranking(&ranking, ds, group, max_rank)
}

/// Welch's two-sample t-test.
#[derive(Clone, Copy, Debug)]
pub struct TTestResult {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
    pub significant: bool,
}

/// Two-sided Welch t-test for a difference in means, usually across per-seed
/// metric values of two models.
pub fn t_test_two_sample(a: &[f64], b: &[f64], alpha: f64) -> Result<TTestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::invalid(
            "t-test",
            format!("need at least two observations per side, got {} and {}", a.len(), b.len()),
        ));
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let var = |xs: &[f64], m: f64| {
        xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
    };
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (var(a, ma), var(b, mb));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let se2 = va / na + vb / nb;

    if se2 == 0.0 {
        // Degenerate samples: identical constants on both sides.
        let equal = ma == mb;
        return Ok(TTestResult {
            t: if equal { 0.0 } else { f64::INFINITY * (ma - mb).signum() },
            df: na + nb - 2.0,
            p_value: if equal { 1.0 } else { 0.0 },
            significant: !equal,
        });
    }

    let t = (ma - mb) / se2.sqrt();
    // Welch-Satterthwaite degrees of freedom.
    let df = se2 * se2
        / ((va / na) * (va / na) / (na - 1.0) + (vb / nb) * (vb / nb) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::Numeric(format!("t distribution with df {df}: {e}")))?;
    let p_value = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok(TTestResult {
        t,
        df,
        p_value,
        significant: p_value < alpha,
    })
}

/// Influence records as TSV, one row per attributed item.
pub fn write_influence(path: &Path, records: &[InfluenceRecord]) -> Result<()> {
    let mut out = String::from("group_id\titem_id\tuser_id\tweight\traw_price\tis_frequent\n");
    for r in records {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            r.group_id, r.item_id, r.user_id, r.weight, r.raw_price, r.is_frequent
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Labeled goodness-of-fit outcomes as TSV.
pub fn write_chi_results(path: &Path, rows: &[(&str, ChiSquareResult)]) -> Result<()> {
    let mut out =
        String::from("label\tcount_a\tcount_b\tstatistic\tcritical\treject_equal_split\n");
    for (label, r) in rows {
        out.push_str(&format!(
            "{label}\t{}\t{}\t{}\t{}\t{}\n",
            r.count_a, r.count_b, r.statistic, r.critical, r.reject_equal_split
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Decile report as TSV.
pub fn write_bucket_report(path: &Path, rows: &[BucketRow]) -> Result<()> {
    let mut out = String::from(
        "bucket\tlow_price\thigh_price\tcount_frequent\tcount_occasional\tfrequent_share\n",
    );
    for r in rows {
        let share = r
            .frequent_share
            .map(|s| s.to_string())
            .unwrap_or_else(|| "-".into());
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            r.bucket, r.low_price, r.high_price, r.count_frequent, r.count_occasional, share
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// GMV curves as TSV, one row per rank per group.
pub fn write_gmv(path: &Path, curves: &[GmvCurve]) -> Result<()> {
    let mut out = String::from("group_id\trank\tcumulative_gmv\n");
    for curve in curves {
        for (i, v) in curve.cumulative.iter().enumerate() {
            out.push_str(&format!("{}\t{}\t{}\n", curve.group_id, i + 1, v));
        }
    }
    std::fs::write(path, out).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}
