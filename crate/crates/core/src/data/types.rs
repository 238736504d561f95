//! Core dataset types and their structural invariants.

use crate::data::{normalize_frequency, normalize_price};
use crate::error::{Error, Result};
use sha2::{Digest, Sha256};

pub type UserId = u32;
pub type ItemId = u32;
pub type GroupId = u32;

/// Whether interaction values are purchase indicators or ratings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeedbackKind {
    /// Values are exactly 1 (a purchase happened).
    Implicit,
    /// Values are positive ratings.
    Explicit,
}

impl FeedbackKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeedbackKind::Implicit => "implicit",
            FeedbackKind::Explicit => "explicit",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "implicit" => Ok(FeedbackKind::Implicit),
            "explicit" => Ok(FeedbackKind::Explicit),
            other => Err(Error::invalid(
                "feedback kind",
                format!("expected implicit|explicit, got {other:?}"),
            )),
        }
    }
}

/// An item with its raw price and the normalized inverse price `alpha`.
///
/// `alpha` lies in [0.01, 1]; 1 marks the cheapest item, 0.01 the priciest.
#[derive(Clone, Debug, PartialEq)]
pub struct CatalogItem {
    pub item_id: ItemId,
    pub raw_price: f64,
    pub alpha: f64,
}

/// A user with a training purchase count and its normalized frequency.
///
/// `freq` lies in [0, 5]; 5 marks the most frequent buyer.
#[derive(Clone, Debug, PartialEq)]
pub struct UserProfile {
    pub user_id: UserId,
    pub purchase_count: u64,
    pub freq: f64,
}

/// A group and its member list. Members are unique; order is not significant.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupDef {
    pub group_id: GroupId,
    pub members: Vec<UserId>,
}

/// One (row, column) interaction. Rows are users or groups depending on the
/// set the entry lives in.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interaction {
    pub row: u32,
    pub col: ItemId,
    pub value: f64,
    pub timestamp: Option<i64>,
}

/// A sparse interaction matrix stored as entries sorted by (row, col).
///
/// Construction rejects duplicate (row, col) pairs, so iteration order is
/// deterministic and lookups can binary-search.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InteractionSet {
    entries: Vec<Interaction>,
}

impl InteractionSet {
    pub fn new(mut entries: Vec<Interaction>) -> Result<Self> {
        entries.sort_by(|a, b| (a.row, a.col).cmp(&(b.row, b.col)));
        for w in entries.windows(2) {
            if w[0].row == w[1].row && w[0].col == w[1].col {
                return Err(Error::DuplicateEntry {
                    kind: "interaction",
                    row: w[0].row as u64,
                    col: w[0].col as u64,
                });
            }
        }
        Ok(InteractionSet { entries })
    }

    pub fn empty() -> Self {
        InteractionSet::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Interaction> {
        self.entries.iter()
    }

    /// All entries of one row, ordered by column.
    pub fn row_entries(&self, row: u32) -> &[Interaction] {
        let lo = self.entries.partition_point(|e| e.row < row);
        let hi = self.entries.partition_point(|e| e.row <= row);
        &self.entries[lo..hi]
    }

    pub fn cols_of(&self, row: u32) -> impl Iterator<Item = ItemId> + '_ {
        self.row_entries(row).iter().map(|e| e.col)
    }

    pub fn contains(&self, row: u32, col: ItemId) -> bool {
        self.get(row, col).is_some()
    }

    pub fn get(&self, row: u32, col: ItemId) -> Option<f64> {
        let entries = self.row_entries(row);
        entries
            .binary_search_by(|e| e.col.cmp(&col))
            .ok()
            .map(|i| entries[i].value)
    }

    /// Interaction count per column over `n_items` columns.
    pub fn col_counts(&self, n_items: u32) -> Vec<u64> {
        let mut counts = vec![0u64; n_items as usize];
        for e in &self.entries {
            counts[e.col as usize] += 1;
        }
        counts
    }

    /// Interaction count per row over `n_rows` rows.
    pub fn row_counts(&self, n_rows: u32) -> Vec<u64> {
        let mut counts = vec![0u64; n_rows as usize];
        for e in &self.entries {
            counts[e.row as usize] += 1;
        }
        counts
    }
}

/// A complete dataset: entities, train interactions, and test interactions.
///
/// `user_item` / `group_item` hold the training window; the `_test` sets hold
/// the held-out window used for evaluation and GMV accounting.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub users: Vec<UserProfile>,
    pub items: Vec<CatalogItem>,
    pub groups: Vec<GroupDef>,
    pub user_item: InteractionSet,
    pub group_item: InteractionSet,
    pub user_item_test: InteractionSet,
    pub group_item_test: InteractionSet,
    pub feedback: FeedbackKind,
}

impl Dataset {
    pub fn n_users(&self) -> u32 {
        self.users.len() as u32
    }

    pub fn n_items(&self) -> u32 {
        self.items.len() as u32
    }

    pub fn n_groups(&self) -> u32 {
        self.groups.len() as u32
    }

    pub fn group(&self, g: GroupId) -> Result<&GroupDef> {
        self.groups.get(g as usize).ok_or(Error::DanglingId {
            kind: "group",
            id: g as u64,
        })
    }

    pub fn item(&self, i: ItemId) -> Result<&CatalogItem> {
        self.items.get(i as usize).ok_or(Error::DanglingId {
            kind: "item",
            id: i as u64,
        })
    }

    pub fn user(&self, u: UserId) -> Result<&UserProfile> {
        self.users.get(u as usize).ok_or(Error::DanglingId {
            kind: "user",
            id: u as u64,
        })
    }

    /// Recompute purchase counts from the training window and refresh the
    /// normalized `freq` and `alpha` fields. Builders call this last.
    pub fn recompute_profiles(&mut self) -> Result<()> {
        let counts = self.user_item.row_counts(self.n_users());
        let freqs = normalize_frequency(&counts)?;
        for (u, profile) in self.users.iter_mut().enumerate() {
            profile.purchase_count = counts[u];
            profile.freq = freqs[u];
        }
        let prices: Vec<f64> = self.items.iter().map(|it| it.raw_price).collect();
        let alphas = normalize_price(&prices)?;
        for (i, item) in self.items.iter_mut().enumerate() {
            item.alpha = alphas[i];
        }
        Ok(())
    }

    /// Check every structural invariant; cheap enough to run after ingestion.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_users();
        let m = self.n_items();
        let s = self.n_groups();

        for (idx, u) in self.users.iter().enumerate() {
            if u.user_id != idx as u32 {
                return Err(Error::invalid(
                    "user table",
                    format!("user at index {idx} has id {}", u.user_id),
                ));
            }
            if !(0.0..=5.0).contains(&u.freq) {
                return Err(Error::invalid(
                    format!("user {} freq", u.user_id),
                    format!("{} outside [0, 5]", u.freq),
                ));
            }
        }
        for (idx, it) in self.items.iter().enumerate() {
            if it.item_id != idx as u32 {
                return Err(Error::invalid(
                    "item table",
                    format!("item at index {idx} has id {}", it.item_id),
                ));
            }
            if !it.raw_price.is_finite() || it.raw_price <= 0.0 {
                return Err(Error::invalid(
                    format!("item {} price", it.item_id),
                    format!("{} is not positive and finite", it.raw_price),
                ));
            }
            if !(0.01..=1.0).contains(&it.alpha) {
                return Err(Error::invalid(
                    format!("item {} alpha", it.item_id),
                    format!("{} outside [0.01, 1]", it.alpha),
                ));
            }
        }

        // Cheaper item never gets a smaller alpha; higher count never a
        // smaller freq. Checked along a sort, not pairwise.
        let mut by_price: Vec<usize> = (0..self.items.len()).collect();
        by_price.sort_by(|&a, &b| {
            self.items[a]
                .raw_price
                .partial_cmp(&self.items[b].raw_price)
                .unwrap()
        });
        for w in by_price.windows(2) {
            if self.items[w[0]].alpha < self.items[w[1]].alpha {
                return Err(Error::invalid(
                    "alpha ordering",
                    format!(
                        "item {} is cheaper than item {} but has smaller alpha",
                        self.items[w[0]].item_id, self.items[w[1]].item_id
                    ),
                ));
            }
        }
        let mut by_count: Vec<usize> = (0..self.users.len()).collect();
        by_count.sort_by_key(|&u| self.users[u].purchase_count);
        for w in by_count.windows(2) {
            if self.users[w[0]].freq > self.users[w[1]].freq {
                return Err(Error::invalid(
                    "freq ordering",
                    format!(
                        "user {} buys less than user {} but has larger freq",
                        self.users[w[0]].user_id, self.users[w[1]].user_id
                    ),
                ));
            }
        }

        for g in &self.groups {
            if g.members.is_empty() {
                return Err(Error::invalid(
                    format!("group {}", g.group_id),
                    "empty member list",
                ));
            }
            let mut seen = std::collections::BTreeSet::new();
            for &u in &g.members {
                if u >= n {
                    return Err(Error::DanglingId {
                        kind: "user",
                        id: u as u64,
                    });
                }
                if !seen.insert(u) {
                    return Err(Error::invalid(
                        format!("group {}", g.group_id),
                        format!("duplicate member {u}"),
                    ));
                }
            }
        }

        let check_set = |set: &InteractionSet, n_rows: u32, kind: &'static str| -> Result<()> {
            for e in set.iter() {
                if e.row >= n_rows {
                    return Err(Error::DanglingId {
                        kind,
                        id: e.row as u64,
                    });
                }
                if e.col >= m {
                    return Err(Error::DanglingId {
                        kind: "item",
                        id: e.col as u64,
                    });
                }
                match self.feedback {
                    FeedbackKind::Implicit => {
                        if e.value != 1.0 {
                            return Err(Error::invalid(
                                format!("{kind}-item value at ({}, {})", e.row, e.col),
                                format!("implicit value must be 1, got {}", e.value),
                            ));
                        }
                    }
                    FeedbackKind::Explicit => {
                        if !e.value.is_finite() || e.value <= 0.0 {
                            return Err(Error::invalid(
                                format!("{kind}-item value at ({}, {})", e.row, e.col),
                                format!("explicit value must be positive, got {}", e.value),
                            ));
                        }
                    }
                }
            }
            Ok(())
        };
        check_set(&self.user_item, n, "user")?;
        check_set(&self.user_item_test, n, "user")?;
        check_set(&self.group_item, s, "group")?;
        check_set(&self.group_item_test, s, "group")?;
        Ok(())
    }

    /// SHA-256 over a canonical encoding of the whole dataset. Stable across
    /// runs and platforms; used to pin checkpoints and manifests to data.
    pub fn hash_hex(&self) -> String {
        let mut h = Sha256::new();
        let put_u64 = |h: &mut Sha256, v: u64| h.update(v.to_le_bytes());
        put_u64(&mut h, self.users.len() as u64);
        put_u64(&mut h, self.items.len() as u64);
        put_u64(&mut h, self.groups.len() as u64);
        h.update([match self.feedback {
            FeedbackKind::Implicit => 0u8,
            FeedbackKind::Explicit => 1u8,
        }]);
        for u in &self.users {
            h.update((u.user_id as u64).to_le_bytes());
            h.update(u.purchase_count.to_le_bytes());
        }
        for it in &self.items {
            h.update((it.item_id as u64).to_le_bytes());
            h.update(it.raw_price.to_bits().to_le_bytes());
        }
        for g in &self.groups {
            h.update((g.group_id as u64).to_le_bytes());
            h.update((g.members.len() as u64).to_le_bytes());
            for &u in &g.members {
                h.update((u as u64).to_le_bytes());
            }
        }
        for set in [
            &self.user_item,
            &self.group_item,
            &self.user_item_test,
            &self.group_item_test,
        ] {
            h.update((set.len() as u64).to_le_bytes());
            for e in set.iter() {
                h.update((e.row as u64).to_le_bytes());
                h.update((e.col as u64).to_le_bytes());
                h.update(e.value.to_bits().to_le_bytes());
                h.update(e.timestamp.unwrap_or(i64::MIN).to_le_bytes());
            }
        }
        let digest = h.finalize();
        let mut out = String::with_capacity(64);
        for b in digest {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }
}

/// Derive group-item interactions from user-item ones: a (group, item) pair is
/// included iff at least `min_buyers` distinct members interacted with the
/// item in the given window. Values are 1 (the rule is a purchase-count gate,
/// so it only applies to implicit data).
pub fn derive_group_interactions(
    user_item: &InteractionSet,
    groups: &[GroupDef],
    min_buyers: u32,
) -> Result<InteractionSet> {
    if min_buyers == 0 {
        return Err(Error::invalid("min_buyers", "must be at least 1"));
    }
    let mut entries = Vec::new();
    for g in groups {
        let mut per_item: std::collections::BTreeMap<ItemId, u32> = std::collections::BTreeMap::new();
        for &u in &g.members {
            for e in user_item.row_entries(u) {
                *per_item.entry(e.col).or_insert(0) += 1;
            }
        }
        for (item, buyers) in per_item {
            if buyers >= min_buyers {
                entries.push(Interaction {
                    row: g.group_id,
                    col: item,
                    value: 1.0,
                    timestamp: None,
                });
            }
        }
    }
    InteractionSet::new(entries)
}
