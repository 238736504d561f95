//! Negative sampling for training and evaluation.

use crate::data::{InteractionSet, ItemId};
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use rand::Rng;
use std::collections::BTreeSet;

/// One positive with its sampled negatives.
#[derive(Clone, Debug, PartialEq)]
pub struct NegativeSample {
    pub row: u32,
    pub pos_item: ItemId,
    pub negatives: Vec<ItemId>,
}

/// Draw `k` distinct items outside `excluded`, uniformly without replacement.
///
/// `excluded` is the caller's notion of "interacted": training positives for
/// training-time draws, train plus test positives for evaluation draws.
pub fn sample_negatives_for_row(
    row: u32,
    excluded: &BTreeSet<ItemId>,
    n_items: u32,
    k: usize,
    rng: &mut impl Rng,
) -> Result<Vec<ItemId>> {
    let eligible = n_items as usize - excluded.len();
    if eligible < k {
        return Err(Error::NotEnoughNegatives {
            row,
            eligible,
            need: k,
        });
    }
    // Rejection sampling is fast while the eligible pool is large; fall back
    // to an explicit pool when more than half of it must be drawn.
    if k * 2 <= eligible {
        let mut drawn = BTreeSet::new();
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            let cand = rng.gen_range(0..n_items);
            if !excluded.contains(&cand) && drawn.insert(cand) {
                out.push(cand);
            }
        }
        Ok(out)
    } else {
        let mut pool: Vec<ItemId> = (0..n_items).filter(|i| !excluded.contains(i)).collect();
        // Partial Fisher-Yates: the first k slots become the sample.
        for i in 0..k {
            let j = rng.gen_range(i..pool.len());
            pool.swap(i, j);
        }
        pool.truncate(k);
        Ok(pool)
    }
}

/// Sample `k_per_positive` negatives for every positive in `positives`.
///
/// Negatives for a positive are distinct and exclude every item its row
/// interacted with in `positives`. Draws are deterministic in `seed` and
/// independent across positives, so extending the set never changes the
/// negatives of earlier entries.
pub fn sample_negatives(
    positives: &InteractionSet,
    n_items: u32,
    k_per_positive: usize,
    seed: u64,
) -> Result<Vec<NegativeSample>> {
    let mut out = Vec::with_capacity(positives.len());
    let mut excluded: BTreeSet<ItemId> = BTreeSet::new();
    let mut current_row = None;
    for e in positives.iter() {
        if current_row != Some(e.row) {
            excluded = positives.cols_of(e.row).collect();
            current_row = Some(e.row);
        }
        let mut rng = stream_rng(seed, &[e.row as u64, e.col as u64]);
        let negatives = sample_negatives_for_row(e.row, &excluded, n_items, k_per_positive, &mut rng)?;
        out.push(NegativeSample {
            row: e.row,
            pos_item: e.col,
            negatives,
        });
    }
    Ok(out)
}
