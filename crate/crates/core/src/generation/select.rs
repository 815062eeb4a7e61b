use alloc::vec::Vec;

use super::CandidateQueues;
use crate::config::{Item, ObjectiveWeights, UserContext};
use crate::error::{Error, Result};
use crate::math;
use crate::model::SlateScorer;
use crate::value::{list_value, ListValue};

/// Cosine similarity of unit-norm embeddings.
pub fn similarity(a: &Item, b: &Item) -> f64 {
    math::dot(&a.embedding, &b.embedding)
}

/// `lambda * value - (1 - lambda) * max similarity to the last `window` prefix items`.
pub fn mmr_score(candidate: &Item, prefix: &[&Item], window: usize, lambda: f64, value_with_candidate: f64) -> f64 {
    let start = prefix.len().saturating_sub(window);
    let max_sim = prefix[start..]
        .iter()
        .map(|p| similarity(candidate, p))
        .fold(None, |m: Option<f64>, s| Some(m.map_or(s, |m| m.max(s))))
        .unwrap_or(0.0);
    lambda * value_with_candidate - (1.0 - lambda) * max_sim
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionParams {
    pub l_o: usize,
    pub weights: ObjectiveWeights,
    pub lambda: f64,
    pub window: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateRecord {
    pub queue: usize,
    pub pool_index: usize,
    pub item_id: u64,
    /// Value of the prefix extended by this candidate.
    pub value: ListValue,
    pub mmr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub candidates: Vec<CandidateRecord>,
    pub chosen_queue: usize,
}

/// Result of one slate generation.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationTrace {
    pub pool_indices: Vec<usize>,
    pub item_ids: Vec<u64>,
    pub source_queues: Vec<usize>,
    pub steps: Vec<StepRecord>,
    /// Number of model invocations issued.
    pub invocations: usize,
}

impl GenerationTrace {
    fn new(l_o: usize) -> Self {
        Self {
            pool_indices: Vec::with_capacity(l_o),
            item_ids: Vec::with_capacity(l_o),
            source_queues: Vec::with_capacity(l_o),
            steps: Vec::with_capacity(l_o),
            invocations: 0,
        }
    }

    pub fn items<'a>(&self, pool: &'a [Item]) -> Vec<&'a Item> {
        self.pool_indices.iter().map(|&i| &pool[i]).collect()
    }

    /// Same items, order, sources and per-step scores; invocation counts may differ.
    pub fn same_selection(&self, other: &Self) -> bool {
        self.pool_indices == other.pool_indices
            && self.item_ids == other.item_ids
            && self.source_queues == other.source_queues
            && self.steps == other.steps
    }

    /// Value of the full generated list (last step's chosen candidate).
    pub fn final_value(&self) -> Option<ListValue> {
        let last = self.steps.last()?;
        last.candidates.iter().find(|c| c.queue == last.chosen_queue).map(|c| c.value)
    }

    fn push(&mut self, pool: &[Item], pool_index: usize, queue: usize) {
        self.pool_indices.push(pool_index);
        self.item_ids.push(pool[pool_index].id);
        self.source_queues.push(queue);
    }
}

/// `true` if `a` beats the incumbent `b`: higher score, then lower queue, then lower id.
fn better(a: &CandidateRecord, b: &CandidateRecord) -> bool {
    if a.mmr != b.mmr {
        return a.mmr > b.mmr;
    }
    (a.queue, a.item_id) < (b.queue, b.item_id)
}

/// Greedy slate construction in one call: each step expands the prefix with
/// every queue head, scores all expansions as one batch, and keeps the best
/// by windowed MMR over the combined list value.
pub fn generate<S: SlateScorer + ?Sized>(
    pool: &[Item],
    user: &UserContext,
    queues: &CandidateQueues,
    scorer: &S,
    params: &SelectionParams,
) -> Result<GenerationTrace> {
    check_pool(pool, queues)?;
    let mut state = queues.clone();
    let mut trace = GenerationTrace::new(params.l_o);
    let mut prefix: Vec<&Item> = Vec::with_capacity(params.l_o);
    for step in 0..params.l_o {
        let heads: Vec<(usize, usize)> = (0..state.num_queues())
            .filter_map(|q| state.head(q).map(|i| (q, i)))
            .collect();
        if heads.is_empty() {
            return Err(Error::Exhausted { picked: step, wanted: params.l_o });
        }
        let expansions: Vec<Vec<&Item>> = heads
            .iter()
            .map(|&(_, i)| {
                let mut l = prefix.clone();
                l.push(&pool[i]);
                l
            })
            .collect();
        let refs: Vec<&[&Item]> = expansions.iter().map(Vec::as_slice).collect();
        let scored = scorer.score_batch(user, &refs)?;
        trace.invocations += 1;
        if scored.len() != heads.len() {
            return Err(Error::shape("scorer returned the wrong batch size"));
        }
        let mut candidates = Vec::with_capacity(heads.len());
        for ((&(q, i), list), s) in heads.iter().zip(&expansions).zip(&scored) {
            let value = list_value(&s.click, &s.pay, list, &params.weights)?;
            let mmr = mmr_score(&pool[i], &prefix, params.window, params.lambda, value.combined);
            candidates.push(CandidateRecord { queue: q, pool_index: i, item_id: pool[i].id, value, mmr });
        }
        let mut best = 0;
        for k in 1..candidates.len() {
            if better(&candidates[k], &candidates[best]) {
                best = k;
            }
        }
        let (q, i) = (candidates[best].queue, candidates[best].pool_index);
        let taken = state.take(q);
        debug_assert_eq!(taken, Some(i));
        prefix.push(&pool[i]);
        trace.push(pool, i, q);
        trace.steps.push(StepRecord { candidates, chosen_queue: q });
    }
    Ok(trace)
}

/// The naive generator: one scorer invocation per candidate per step, with
/// `overhead` run before every invocation to stand in for per-call cost.
///
/// Queue heads are recomputed from scratch each step rather than through the
/// queue cursors, so this serves as an independent check of [`generate`].
pub fn generate_iterative_reference<S: SlateScorer + ?Sized>(
    pool: &[Item],
    user: &UserContext,
    queues: &CandidateQueues,
    scorer: &S,
    params: &SelectionParams,
    overhead: &mut dyn FnMut(),
) -> Result<GenerationTrace> {
    check_pool(pool, queues)?;
    let mut chosen: Vec<usize> = Vec::with_capacity(params.l_o);
    let mut trace = GenerationTrace::new(params.l_o);
    for step in 0..params.l_o {
        let mut candidates: Vec<CandidateRecord> = Vec::new();
        for (q, members) in queues.queues().iter().enumerate() {
            let Some(&i) = members.iter().find(|i| !chosen.contains(i)) else {
                continue;
            };
            let mut list: Vec<&Item> = chosen.iter().map(|&c| &pool[c]).collect();
            list.push(&pool[i]);
            overhead();
            let scored = scorer.score_batch(user, &[list.as_slice()])?;
            trace.invocations += 1;
            let s = scored.first().ok_or_else(|| Error::shape("scorer returned no result"))?;
            let value = list_value(&s.click, &s.pay, &list, &params.weights)?;
            let mmr = mmr_score(&pool[i], &list[..list.len() - 1], params.window, params.lambda, value.combined);
            candidates.push(CandidateRecord { queue: q, pool_index: i, item_id: pool[i].id, value, mmr });
        }
        let best = candidates
            .iter()
            .reduce(|b, c| if better(c, b) { c } else { b })
            .cloned()
            .ok_or(Error::Exhausted { picked: step, wanted: params.l_o })?;
        chosen.push(best.pool_index);
        trace.push(pool, best.pool_index, best.queue);
        trace.steps.push(StepRecord { candidates, chosen_queue: best.queue });
    }
    Ok(trace)
}

/// Fixed queue-index pattern without any model evaluation. When the patterned
/// queue is empty the lowest-index non-empty queue is used instead.
pub fn generate_template(pool: &[Item], queues: &CandidateQueues, pattern: &[usize], l_o: usize) -> Result<GenerationTrace> {
    check_pool(pool, queues)?;
    let mut state = queues.clone();
    let mut trace = GenerationTrace::new(l_o);
    for step in 0..l_o {
        let wanted = if pattern.is_empty() { 0 } else { pattern[step % pattern.len()] };
        let q = if wanted < state.num_queues() && state.head(wanted).is_some() {
            wanted
        } else {
            (0..state.num_queues())
                .find(|&q| state.head(q).is_some())
                .ok_or(Error::Exhausted { picked: step, wanted: l_o })?
        };
        let i = state.take(q).expect("non-empty queue");
        trace.push(pool, i, q);
    }
    Ok(trace)
}

fn check_pool(pool: &[Item], queues: &CandidateQueues) -> Result<()> {
    if queues.pool_len() != pool.len() {
        return Err(Error::shape("queues were built for a different pool"));
    }
    Ok(())
}
