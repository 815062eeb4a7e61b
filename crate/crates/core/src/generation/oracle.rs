use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;

use crate::config::{Item, ObjectiveWeights, UserContext};
use crate::error::{Error, Result};
use crate::model::SlateScorer;
use crate::value::{list_value, ListValue};

/// Largest number of ordered arrangements the exhaustive oracle will score.
pub const ORACLE_GUARD: u128 = 1_000_000;

/// Lists scored per scorer call while enumerating.
const CHUNK: usize = 512;

/// Number of ordered selections of `k` items out of `n`.
pub fn arrangements(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    ((n - k + 1)..=n).fold(1u128, |acc, f| acc.saturating_mul(f as u128))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub best: ListValue,
    /// Pool indices of the best arrangement.
    pub pool_indices: Vec<usize>,
    pub item_ids: Vec<u64>,
    pub evaluated: u128,
}

/// Scores every ordered selection of `l_o` pool items and returns the one
/// with the highest combined value. Ties go to the lexicographically
/// smallest id sequence.
pub fn exhaustive_oracle<S: SlateScorer + ?Sized>(
    pool: &[Item],
    user: &UserContext,
    scorer: &S,
    weights: &ObjectiveWeights,
    l_o: usize,
) -> Result<OracleResult> {
    if l_o == 0 || l_o > pool.len() {
        return Err(Error::invalid("oracle list length must be in 1..=pool size"));
    }
    let total = arrangements(pool.len(), l_o);
    if total > ORACLE_GUARD {
        return Err(Error::GuardExceeded(total));
    }
    // Enumerate over pool positions sorted by id so the first maximum found
    // is also the lexicographically smallest.
    let mut by_id: Vec<usize> = (0..pool.len()).collect();
    by_id.sort_by_key(|&i| pool[i].id);

    let mut best: Option<(ListValue, Vec<usize>)> = None;
    let mut evaluated = 0u128;
    let mut pending: Vec<Vec<usize>> = Vec::with_capacity(CHUNK);
    let mut flush = |pending: &mut Vec<Vec<usize>>, best: &mut Option<(ListValue, Vec<usize>)>| -> Result<()> {
        let lists: Vec<Vec<&Item>> = pending.iter().map(|p| p.iter().map(|&i| &pool[i]).collect()).collect();
        let refs: Vec<&[&Item]> = lists.iter().map(Vec::as_slice).collect();
        let scored = scorer.score_batch(user, &refs)?;
        for ((perm, list), s) in pending.iter().zip(&lists).zip(&scored) {
            let v = list_value(&s.click, &s.pay, list, weights)?;
            if best.as_ref().is_none_or(|(b, _)| v.combined > b.combined) {
                *best = Some((v, perm.clone()));
            }
        }
        evaluated += pending.len() as u128;
        pending.clear();
        Ok(())
    };

    // Iterative lexicographic enumeration of k-permutations of `by_id`.
    let n = pool.len();
    let mut stack: Vec<usize> = Vec::with_capacity(l_o);
    let mut used = alloc::vec![false; n];
    let mut next = 0usize;
    loop {
        if stack.len() == l_o {
            pending.push(stack.iter().map(|&r| by_id[r]).collect());
            if pending.len() == CHUNK {
                flush(&mut pending, &mut best)?;
            }
            let last = stack.pop().expect("non-empty");
            used[last] = false;
            next = last + 1;
            continue;
        }
        match (next..n).find(|&r| !used[r]) {
            Some(r) => {
                used[r] = true;
                stack.push(r);
                next = 0;
            }
            None => match stack.pop() {
                Some(last) => {
                    used[last] = false;
                    next = last + 1;
                }
                None => break,
            },
        }
    }
    if !pending.is_empty() {
        flush(&mut pending, &mut best)?;
    }
    let (best, pool_indices) = best.expect("at least one arrangement");
    let item_ids = pool_indices.iter().map(|&i| pool[i].id).collect();
    Ok(OracleResult { best, pool_indices, item_ids, evaluated })
}

/// Combined values of `count` uniformly random length-`l_o` lists drawn
/// without replacement from the pool.
pub fn random_list_values<S: SlateScorer + ?Sized, R: Rng + ?Sized>(
    pool: &[Item],
    user: &UserContext,
    scorer: &S,
    weights: &ObjectiveWeights,
    l_o: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<ListValue>> {
    if l_o == 0 || l_o > pool.len() {
        return Err(Error::invalid("list length must be in 1..=pool size"));
    }
    let lists: Vec<Vec<&Item>> = (0..count)
        .map(|_| index::sample(rng, pool.len(), l_o).into_iter().map(|i| &pool[i]).collect())
        .collect();
    let refs: Vec<&[&Item]> = lists.iter().map(Vec::as_slice).collect();
    let scored = scorer.score_batch(user, &refs)?;
    lists
        .iter()
        .zip(&scored)
        .map(|(l, s)| list_value(&s.click, &s.pay, l, weights))
        .collect()
}
