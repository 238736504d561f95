//! Popularity baseline: rank items by training interaction count.

use crate::data::{InteractionSet, ItemId};

/// Per-item interaction counts over the given training sets.
pub fn popularity_counts(sets: &[&InteractionSet], n_items: usize) -> Vec<u64> {
    let mut counts = vec![0u64; n_items];
    for set in sets {
        for e in set.iter() {
            counts[e.col as usize] += 1;
        }
    }
    counts
}

/// Candidates sorted by count descending, ties broken by ascending item id.
/// Items absent from `counts` rank as count 0.
pub fn popularity_rank(counts: &[u64], candidates: &[ItemId]) -> Vec<ItemId> {
    let mut ranked = candidates.to_vec();
    ranked.sort_by_key(|&i| {
        let c = counts.get(i as usize).copied().unwrap_or(0);
        (std::cmp::Reverse(c), i)
    });
    ranked
}
