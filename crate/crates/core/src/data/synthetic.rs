//! Synthetic dataset generator with a planted, price-dependent influence
//! signal.
//!
//! The generator builds a small storefront where the mechanism under test is
//! true by construction: every group mixes a minority of heavy buyers with a
//! majority of light buyers, heavy buyers of a group share a taste set of
//! items, and group purchases of cheap items are sourced from frequent buyers
//! with probability `rho` while purchases of the priciest items always come
//! from a uniformly chosen member. The per-positive source is recorded as
//! ground truth, so influence analysis can be validated against the
//! construction instead of against a trained model.

use crate::data::load::{IdMaps, RatingRule};
use crate::data::types::{
    CatalogItem, Dataset, FeedbackKind, GroupDef, Interaction, InteractionSet, ItemId, UserId,
};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, tag};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

/// Generator configuration. Defaults produce the desk-scale storefront used
/// throughout the test suite.
#[derive(Clone, Debug)]
pub struct GenConfig {
    pub n_users: u32,
    pub n_items: u32,
    pub n_groups: u32,
    /// Members per group; groups are disjoint.
    pub group_size: u32,
    /// Fraction of each group's members drawn from the heavy-buyer pool.
    pub heavy_fraction: f64,
    /// Training purchases per heavy buyer, inclusive range.
    pub heavy_purchases: (u32, u32),
    /// Training purchases per light buyer, inclusive range.
    pub light_purchases: (u32, u32),
    /// Probability that a heavy buyer's purchase comes from the group taste set.
    pub taste_focus: f64,
    /// Probability that a light group member's purchase comes from the next
    /// group's taste set instead of the whole catalog. Plants personal tastes
    /// that disagree with the member's own group, so aggregators that weight
    /// all members equally absorb misleading signal. Zero disables the pull
    /// and leaves light members browsing uniformly.
    pub decoy_focus: f64,
    /// Group-item positives generated per group (train + test together).
    pub positives_per_group: u32,
    /// Fraction of each group's positives held out as the test window.
    pub test_fraction: f64,
    /// Unnormalized weight of each price decile when drawing a positive's
    /// decile; index 0 is the cheapest decile.
    pub decile_weights: [f64; 10],
    /// Probability that a cheapest-decile positive is sourced from a frequent
    /// buyer. The sourcing probability decays linearly to 0 at the priciest
    /// decile, which always uses a uniformly chosen member.
    pub rho: f64,
    /// Up to this many extra members buy each test positive besides the source.
    pub extra_buyers_max: u32,
    /// Raw price range; prices are log-uniform and rounded to cents.
    pub price_range: (f64, f64),
    pub feedback: FeedbackKind,
    /// Averaging rule for explicit group ratings.
    pub rating_rule: RatingRule,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_users: 500,
            n_items: 300,
            n_groups: 8,
            group_size: 60,
            heavy_fraction: 0.35,
            heavy_purchases: (45, 55),
            light_purchases: (0, 2),
            taste_focus: 0.85,
            decoy_focus: 0.0,
            positives_per_group: 165,
            test_fraction: 0.15,
            decile_weights: [0.28, 0.18, 0.12, 0.09, 0.07, 0.06, 0.05, 0.05, 0.05, 0.05],
            rho: 0.9,
            extra_buyers_max: 2,
            price_range: (1.0, 1000.0),
            feedback: FeedbackKind::Implicit,
            rating_rule: RatingRule::RatersOnly,
        }
    }
}

/// Ground-truth provenance of one generated group-item positive.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantedSource {
    pub group_id: u32,
    pub item_id: ItemId,
    pub source_user: UserId,
    /// Whether the source is a frequent buyer of its group (training counts,
    /// strictly more than twice the group mean).
    pub source_is_frequent: bool,
    pub in_test: bool,
}

/// A generated dataset plus its ground-truth influence labels.
#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub id_maps: IdMaps,
    pub sources: Vec<PlantedSource>,
}

fn validate_config(c: &GenConfig) -> Result<()> {
    let fail = |why: String| Err(Error::Infeasible(why));
    if c.n_users == 0 || c.n_items == 0 || c.n_groups == 0 || c.group_size == 0 {
        return fail("all entity counts must be positive".into());
    }
    if c.n_items < 10 {
        return fail(format!("need at least 10 items for price deciles, got {}", c.n_items));
    }
    if (c.n_groups as u64) * (c.group_size as u64) > c.n_users as u64 {
        return fail(format!(
            "{} groups of {} members exceed the {}-user pool",
            c.n_groups, c.group_size, c.n_users
        ));
    }
    if c.positives_per_group as u64 + 20 > c.n_items as u64 {
        return fail(format!(
            "{} positives per group leave no room for 20 evaluation candidates among {} items",
            c.positives_per_group, c.n_items
        ));
    }
    if !(0.0..=1.0).contains(&c.rho) {
        return fail(format!("rho {} outside [0, 1]", c.rho));
    }
    if !(0.0..=1.0).contains(&c.heavy_fraction) || !(0.0..=1.0).contains(&c.taste_focus) {
        return fail("heavy_fraction and taste_focus must lie in [0, 1]".into());
    }
    if !(0.0..=1.0).contains(&c.decoy_focus) {
        return fail(format!("decoy_focus {} outside [0, 1]", c.decoy_focus));
    }
    if !(0.0..1.0).contains(&c.test_fraction) {
        return fail(format!("test_fraction {} outside [0, 1)", c.test_fraction));
    }
    if c.heavy_purchases.0 > c.heavy_purchases.1 || c.light_purchases.0 > c.light_purchases.1 {
        return fail("purchase ranges must be lo <= hi".into());
    }
    if c.decile_weights.iter().any(|&w| w < 0.0) || c.decile_weights.iter().sum::<f64>() <= 0.0 {
        return fail("decile weights must be nonnegative with positive sum".into());
    }
    if !(c.price_range.0 > 0.0 && c.price_range.0 < c.price_range.1) {
        return fail(format!(
            "price range ({}, {}) must satisfy 0 < lo < hi",
            c.price_range.0, c.price_range.1
        ));
    }
    Ok(())
}

/// Item ids of decile `k` (0 = cheapest), by price rank with id tie-break.
fn price_deciles(prices: &[f64]) -> Vec<Vec<ItemId>> {
    let m = prices.len();
    let mut by_price: Vec<usize> = (0..m).collect();
    by_price.sort_by(|&a, &b| prices[a].partial_cmp(&prices[b]).unwrap().then(a.cmp(&b)));
    (0..10)
        .map(|k| {
            let lo = k * m / 10;
            let hi = (k + 1) * m / 10;
            by_price[lo..hi].iter().map(|&i| i as u32).collect()
        })
        .collect()
}

fn draw_decile(weights: &[f64; 10], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.gen::<f64>() * total;
    for (k, &w) in weights.iter().enumerate() {
        x -= w;
        if x < 0.0 {
            return k;
        }
    }
    9
}

fn draw_rating(in_taste: bool, rng: &mut ChaCha8Rng) -> f64 {
    if in_taste {
        (4 + rng.gen_range(0..=1)) as f64
    } else {
        (1 + rng.gen_range(0..=4)) as f64
    }
}

/// Frequent buyers per group: training count strictly above twice the mean
/// count of the group's members.
fn frequent_sets(groups: &[GroupDef], counts: &[u64]) -> Vec<BTreeSet<UserId>> {
    groups
        .iter()
        .map(|g| {
            let mean = g.members.iter().map(|&u| counts[u as usize] as f64).sum::<f64>()
                / g.members.len() as f64;
            g.members
                .iter()
                .cloned()
                .filter(|&u| counts[u as usize] as f64 > 2.0 * mean)
                .collect()
        })
        .collect()
}

/// Generate a dataset. Deterministic in (`config`, `seed`): the same inputs
/// produce identical datasets and ground-truth labels, byte for byte.
pub fn generate_synthetic(config: &GenConfig, seed: u64) -> Result<SyntheticData> {
    validate_config(config)?;
    let n = config.n_users;
    let m = config.n_items;
    let s = config.n_groups;

    // Prices: log-uniform over the configured range, rounded to cents.
    let mut rng = stream_rng(seed, &[tag("synth.prices")]);
    let (lo, hi) = config.price_range;
    let prices: Vec<f64> = (0..m)
        .map(|_| {
            let u = rng.gen::<f64>();
            let p = lo * (hi / lo).powf(u);
            (p * 100.0).round().max(1.0) / 100.0
        })
        .collect();
    let deciles = price_deciles(&prices);

    // Groups: disjoint slices of a shuffled user pool. The first
    // `heavy_count` members of each slice become heavy buyers.
    let mut rng = stream_rng(seed, &[tag("synth.groups")]);
    let mut pool: Vec<UserId> = (0..n).collect();
    pool.shuffle(&mut rng);
    let heavy_count = ((config.group_size as f64) * config.heavy_fraction).round() as usize;
    let mut groups = Vec::with_capacity(s as usize);
    let mut heavy: Vec<bool> = vec![false; n as usize];
    let mut group_of: Vec<Option<u32>> = vec![None; n as usize];
    for g in 0..s {
        let start = (g * config.group_size) as usize;
        let mut members: Vec<UserId> =
            pool[start..start + config.group_size as usize].to_vec();
        for &u in members.iter().take(heavy_count) {
            heavy[u as usize] = true;
        }
        for &u in &members {
            group_of[u as usize] = Some(g);
        }
        members.sort_unstable();
        groups.push(GroupDef {
            group_id: g,
            members,
        });
    }

    // Taste sets: stripe each decile's items across groups so every group
    // tastes a few items at every price level.
    let mut rng = stream_rng(seed, &[tag("synth.tastes")]);
    let mut taste: Vec<Vec<Vec<ItemId>>> = vec![vec![Vec::new(); 10]; s as usize];
    for (k, items) in deciles.iter().enumerate() {
        let mut shuffled = items.clone();
        shuffled.shuffle(&mut rng);
        for (idx, &item) in shuffled.iter().enumerate() {
            taste[idx % s as usize][k].push(item);
        }
    }
    let taste_flat: Vec<Vec<ItemId>> = taste
        .iter()
        .map(|per_decile| per_decile.iter().flatten().cloned().collect())
        .collect();

    // Training purchases. Heavy buyers concentrate on their group's taste
    // set; light buyers wander.
    let mut rng = stream_rng(seed, &[tag("synth.purchases")]);
    let mut train: BTreeMap<(UserId, ItemId), f64> = BTreeMap::new();
    for u in 0..n {
        let (lo, hi) = if heavy[u as usize] {
            config.heavy_purchases
        } else {
            config.light_purchases
        };
        let want = rng.gen_range(lo..=hi) as usize;
        let mut bought = BTreeSet::new();
        let mut attempts = 0;
        while bought.len() < want && attempts < want * 30 + 30 {
            attempts += 1;
            let in_taste = heavy[u as usize]
                && rng.gen::<f64>() < config.taste_focus
                && group_of[u as usize].is_some();
            // Light members can be pulled toward the next group's taste, a
            // coherent pattern their own group never buys into.
            let in_decoy = !heavy[u as usize]
                && config.decoy_focus > 0.0
                && group_of[u as usize].is_some()
                && rng.gen::<f64>() < config.decoy_focus;
            let item = if in_taste {
                let t = &taste_flat[group_of[u as usize].unwrap() as usize];
                if t.is_empty() {
                    rng.gen_range(0..m)
                } else {
                    t[rng.gen_range(0..t.len())]
                }
            } else if in_decoy {
                let g = group_of[u as usize].unwrap();
                let t = &taste_flat[((g + 1) % s) as usize];
                if t.is_empty() {
                    rng.gen_range(0..m)
                } else {
                    t[rng.gen_range(0..t.len())]
                }
            } else {
                rng.gen_range(0..m)
            };
            if bought.insert(item) {
                let value = match config.feedback {
                    FeedbackKind::Implicit => 1.0,
                    FeedbackKind::Explicit => draw_rating(in_taste, &mut rng),
                };
                train.insert((u, item), value);
            }
        }
    }

    // Frequent-buyer sets from the activity model alone; sourcing below uses
    // these, and labels are recomputed at the end from final counts.
    let mut counts = vec![0u64; n as usize];
    for &(u, _) in train.keys() {
        counts[u as usize] += 1;
    }
    let frequents = frequent_sets(&groups, &counts);

    // Group positives with planted sourcing.
    let mut rng = stream_rng(seed, &[tag("synth.positives")]);
    let mut sources: Vec<PlantedSource> = Vec::new();
    let mut group_pos: BTreeSet<(u32, ItemId)> = BTreeSet::new();
    for g in 0..s {
        let members = &groups[g as usize].members;
        let freq_list: Vec<UserId> = frequents[g as usize].iter().cloned().collect();
        let target = config.positives_per_group as usize;
        let mut placed = 0;
        let mut attempts = 0;
        while placed < target && attempts < target * 60 {
            attempts += 1;
            let k = draw_decile(&config.decile_weights, &mut rng);
            // Planted probability: rho at the cheapest decile, linearly down
            // to zero at the priciest.
            let p_planted = config.rho * (9 - k) as f64 / 9.0;
            let planted = !freq_list.is_empty() && rng.gen::<f64>() < p_planted;
            let source = if planted {
                freq_list[rng.gen_range(0..freq_list.len())]
            } else {
                members[rng.gen_range(0..members.len())]
            };
            // Heavy sources buy from the group taste at this price level;
            // light sources buy anything at this price level.
            let item = if heavy[source as usize] && !taste[g as usize][k].is_empty() {
                let t = &taste[g as usize][k];
                t[rng.gen_range(0..t.len())]
            } else {
                let d = &deciles[k];
                d[rng.gen_range(0..d.len())]
            };
            if group_pos.insert((g, item)) {
                placed += 1;
                sources.push(PlantedSource {
                    group_id: g,
                    item_id: item,
                    source_user: source,
                    source_is_frequent: frequents[g as usize].contains(&source),
                    in_test: false,
                });
            }
        }
    }

    // Hold out a per-group fraction of positives as the test window.
    let mut rng = stream_rng(seed, &[tag("synth.split")]);
    for g in 0..s {
        let mut idxs: Vec<usize> = (0..sources.len())
            .filter(|&i| sources[i].group_id == g)
            .collect();
        idxs.shuffle(&mut rng);
        let n_test = (idxs.len() as f64 * config.test_fraction).ceil() as usize;
        for &i in idxs.iter().take(n_test) {
            sources[i].in_test = true;
        }
    }

    // Test-window purchases: the source buys each test positive, plus up to
    // `extra_buyers_max` other members. These drive GMV buyer counts.
    let mut rng = stream_rng(seed, &[tag("synth.buyers")]);
    let mut test_purchases: BTreeMap<(UserId, ItemId), f64> = BTreeMap::new();
    for src in sources.iter().filter(|s| s.in_test) {
        let members = &groups[src.group_id as usize].members;
        let mut buyers = vec![src.source_user];
        let extras = rng.gen_range(0..=config.extra_buyers_max) as usize;
        let mut guard = 0;
        while buyers.len() < 1 + extras && guard < 40 {
            guard += 1;
            let cand = members[rng.gen_range(0..members.len())];
            if !buyers.contains(&cand) {
                buyers.push(cand);
            }
        }
        for &u in &buyers {
            let value = match config.feedback {
                FeedbackKind::Implicit => 1.0,
                FeedbackKind::Explicit => {
                    let in_taste = heavy[u as usize];
                    draw_rating(in_taste, &mut rng)
                }
            };
            test_purchases.entry((u, src.item_id)).or_insert(value);
        }
    }

    // Explicit mode: every train positive needs at least one member rating to
    // average, so the source rates it in the training window when missing.
    if config.feedback == FeedbackKind::Explicit {
        let mut rng = stream_rng(seed, &[tag("synth.ratings")]);
        for src in sources.iter().filter(|s| !s.in_test) {
            train
                .entry((src.source_user, src.item_id))
                .or_insert_with(|| draw_rating(heavy[src.source_user as usize], &mut rng));
        }
    }

    // Group-item values: 1 for implicit; the configured member-rating average
    // for explicit, taken over the window the positive lives in.
    let mut group_train_entries = Vec::new();
    let mut group_test_entries = Vec::new();
    for src in &sources {
        let value = match config.feedback {
            FeedbackKind::Implicit => 1.0,
            FeedbackKind::Explicit => {
                let window = if src.in_test { &test_purchases } else { &train };
                let members = &groups[src.group_id as usize].members;
                let ratings: Vec<f64> = members
                    .iter()
                    .filter_map(|&u| window.get(&(u, src.item_id)).cloned())
                    .collect();
                let sum: f64 = ratings.iter().sum();
                match config.rating_rule {
                    RatingRule::RatersOnly => sum / ratings.len() as f64,
                    RatingRule::AllMembers => sum / members.len() as f64,
                }
            }
        };
        let e = Interaction {
            row: src.group_id,
            col: src.item_id,
            value,
            timestamp: None,
        };
        if src.in_test {
            group_test_entries.push(e);
        } else {
            group_train_entries.push(e);
        }
    }

    let to_set = |map: &BTreeMap<(UserId, ItemId), f64>| -> Result<InteractionSet> {
        InteractionSet::new(
            map.iter()
                .map(|(&(u, i), &v)| Interaction {
                    row: u,
                    col: i,
                    value: v,
                    timestamp: None,
                })
                .collect(),
        )
    };

    let mut dataset = Dataset {
        users: (0..n)
            .map(|u| crate::data::UserProfile {
                user_id: u,
                purchase_count: 0,
                freq: 0.0,
            })
            .collect(),
        items: (0..m)
            .map(|i| CatalogItem {
                item_id: i,
                raw_price: prices[i as usize],
                alpha: 1.0,
            })
            .collect(),
        groups,
        user_item: to_set(&train)?,
        group_item: InteractionSet::new(group_train_entries)?,
        user_item_test: to_set(&test_purchases)?,
        group_item_test: InteractionSet::new(group_test_entries)?,
        feedback: config.feedback,
    };
    dataset.recompute_profiles()?;
    dataset.validate()?;

    // Relabel ground truth from final counts, which may have shifted when
    // explicit mode added source ratings.
    let final_counts: Vec<u64> = dataset.users.iter().map(|u| u.purchase_count).collect();
    let final_frequents = frequent_sets(&dataset.groups, &final_counts);
    for src in &mut sources {
        src.source_is_frequent = final_frequents[src.group_id as usize].contains(&src.source_user);
    }

    Ok(SyntheticData {
        dataset,
        id_maps: IdMaps::identity(n, m, s),
        sources,
    })
}

/// Write ground-truth influence labels beside a generated dataset.
pub fn write_planted_sources(path: &Path, sources: &[PlantedSource]) -> Result<()> {
    let mut out = String::from("group_id\titem_id\tsource_user\tsource_is_frequent\tin_test\n");
    for s in sources {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            s.group_id, s.item_id, s.source_user, s.source_is_frequent as u8, s.in_test as u8
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> GenConfig {
        GenConfig {
            n_users: 120,
            n_items: 80,
            n_groups: 4,
            group_size: 24,
            positives_per_group: 40,
            heavy_purchases: (20, 26),
            ..GenConfig::default()
        }
    }

    #[test]
    fn same_seed_same_dataset() {
        let a = generate_synthetic(&small_config(), 11).unwrap();
        let b = generate_synthetic(&small_config(), 11).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.sources, b.sources);
        assert_eq!(a.dataset.hash_hex(), b.dataset.hash_hex());
    }

    #[test]
    fn different_seeds_differ() {
        let a = generate_synthetic(&small_config(), 11).unwrap();
        let b = generate_synthetic(&small_config(), 12).unwrap();
        assert_ne!(a.dataset.hash_hex(), b.dataset.hash_hex());
    }

    #[test]
    fn planted_rho_one_sources_cheapest_decile_from_frequent_buyers() {
        let config = GenConfig {
            rho: 1.0,
            ..small_config()
        };
        let data = generate_synthetic(&config, 5).unwrap();
        let prices: Vec<f64> = data.dataset.items.iter().map(|i| i.raw_price).collect();
        let cheapest: BTreeSet<ItemId> = price_deciles(&prices)[0].iter().cloned().collect();
        let cheap_sources: Vec<&PlantedSource> = data
            .sources
            .iter()
            .filter(|s| cheapest.contains(&s.item_id))
            .collect();
        assert!(!cheap_sources.is_empty());
        assert!(cheap_sources.iter().all(|s| s.source_is_frequent));
    }

    #[test]
    fn positives_are_consistent_with_interaction_sets() {
        let data = generate_synthetic(&small_config(), 3).unwrap();
        let ds = &data.dataset;
        for src in &data.sources {
            let set = if src.in_test {
                &ds.group_item_test
            } else {
                &ds.group_item
            };
            assert!(set.contains(src.group_id, src.item_id));
            assert!(ds.groups[src.group_id as usize]
                .members
                .contains(&src.source_user));
            if src.in_test {
                // The source bought the item in the test window.
                assert!(ds.user_item_test.contains(src.source_user, src.item_id));
            }
        }
        assert_eq!(
            ds.group_item.len() + ds.group_item_test.len(),
            data.sources.len()
        );
    }

    #[test]
    fn groups_are_disjoint_and_sized() {
        let data = generate_synthetic(&small_config(), 3).unwrap();
        let mut seen = BTreeSet::new();
        for g in &data.dataset.groups {
            assert_eq!(g.members.len(), 24);
            for &u in &g.members {
                assert!(seen.insert(u), "user {u} in two groups");
            }
        }
    }

    #[test]
    fn rejects_infeasible_configs() {
        let mut c = small_config();
        c.group_size = 1000;
        assert!(matches!(
            generate_synthetic(&c, 1).unwrap_err(),
            Error::Infeasible(_)
        ));

        let mut c = small_config();
        c.positives_per_group = 70; // 70 + 20 > 80 items
        assert!(matches!(
            generate_synthetic(&c, 1).unwrap_err(),
            Error::Infeasible(_)
        ));

        let mut c = small_config();
        c.rho = 1.5;
        assert!(generate_synthetic(&c, 1).is_err());
    }

    #[test]
    fn explicit_mode_produces_valid_ratings() {
        let config = GenConfig {
            feedback: FeedbackKind::Explicit,
            ..small_config()
        };
        let data = generate_synthetic(&config, 9).unwrap();
        data.dataset.validate().unwrap();
        for e in data.dataset.group_item.iter().chain(data.dataset.group_item_test.iter()) {
            assert!(e.value >= 1.0 && e.value <= 5.0, "group rating {}", e.value);
        }
    }

    #[test]
    fn frequent_labels_match_final_counts() {
        let data = generate_synthetic(&small_config(), 7).unwrap();
        let counts: Vec<u64> = data.dataset.users.iter().map(|u| u.purchase_count).collect();
        let sets = frequent_sets(&data.dataset.groups, &counts);
        for src in &data.sources {
            assert_eq!(
                src.source_is_frequent,
                sets[src.group_id as usize].contains(&src.source_user)
            );
        }
    }
}
