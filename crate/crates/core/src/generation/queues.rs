use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::config::{Item, ObjectiveWeights, PartitionStrategy};
use crate::error::{Error, Result};

/// Coefficients over the item prior fields a queue can rank by.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ScoreTerms {
    pub ctr: f64,
    pub cvr: f64,
    pub ctr_cvr: f64,
    pub price: f64,
    pub ctr_cvr_price: f64,
}

impl ScoreTerms {
    pub const ZERO: Self = Self { ctr: 0.0, cvr: 0.0, ctr_cvr: 0.0, price: 0.0, ctr_cvr_price: 0.0 };

    pub fn is_zero(&self) -> bool {
        [self.ctr, self.cvr, self.ctr_cvr, self.price, self.ctr_cvr_price]
            .iter()
            .all(|c| *c == 0.0)
    }
}

/// One objective queue: a name, its ranking expression and its partition priority
/// (lower values claim items first).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct QueueSpec {
    pub name: String,
    #[cfg_attr(feature = "serde", serde(default))]
    pub terms: ScoreTerms,
    pub priority: i64,
}

impl QueueSpec {
    pub fn new(name: &str, terms: ScoreTerms, priority: i64) -> Self {
        Self { name: name.into(), terms, priority }
    }
}

pub fn composite_score(item: &Item, spec: &QueueSpec) -> f64 {
    let t = &spec.terms;
    let cc = item.prior_ctr * item.prior_cvr;
    t.ctr * item.prior_ctr + t.cvr * item.prior_cvr + t.ctr_cvr * cc + t.price * item.price + t.ctr_cvr_price * cc * item.price
}

/// Single pointwise queue `alpha*ctr + beta*ctr*cvr + gamma*ctr*cvr*price`.
pub fn ranking_top_queue_spec(w: &ObjectiveWeights) -> QueueSpec {
    QueueSpec::new(
        "ranking",
        ScoreTerms { ctr: w.alpha, ctr_cvr: w.beta, ctr_cvr_price: w.gamma, ..ScoreTerms::ZERO },
        0,
    )
}

/// Disjoint objective queues over a candidate pool plus the consumption state
/// used during generation.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateQueues {
    queues: Vec<Vec<usize>>,
    cursors: Vec<usize>,
    selected: Vec<bool>,
}

impl CandidateQueues {
    /// Pool indices per queue, in queue order.
    pub fn queues(&self) -> &[Vec<usize>] {
        &self.queues
    }

    pub fn num_queues(&self) -> usize {
        self.queues.len()
    }

    pub fn pool_len(&self) -> usize {
        self.selected.len()
    }

    pub fn selected_mask(&self) -> &[bool] {
        &self.selected
    }

    pub fn is_selected(&self, pool_index: usize) -> bool {
        self.selected[pool_index]
    }

    /// Next unconsumed, unselected element of queue `q`.
    pub fn head(&self, q: usize) -> Option<usize> {
        self.queues[q][self.cursors[q]..].iter().copied().find(|&i| !self.selected[i])
    }

    /// Marks the head of `q` selected and moves the cursor past it.
    pub fn take(&mut self, q: usize) -> Option<usize> {
        let queue = &self.queues[q];
        while self.cursors[q] < queue.len() && self.selected[queue[self.cursors[q]]] {
            self.cursors[q] += 1;
        }
        let idx = *queue.get(self.cursors[q])?;
        self.selected[idx] = true;
        self.cursors[q] += 1;
        Some(idx)
    }

    /// Queue index that owns `pool_index`, if any.
    pub fn owner(&self, pool_index: usize) -> Option<usize> {
        self.queues.iter().position(|q| q.contains(&pool_index))
    }
}

/// Pool indices sorted by `score` descending, ties by item id ascending.
fn ranking(pool: &[Item], spec: &QueueSpec) -> Vec<usize> {
    let scores: Vec<f64> = pool.iter().map(|it| composite_score(it, spec)).collect();
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(pool[a].id.cmp(&pool[b].id))
    });
    idx
}

/// Partitions `pool` into one queue per spec, each holding at most `l_o` items.
pub fn build_queues(pool: &[Item], specs: &[QueueSpec], strategy: PartitionStrategy, l_o: usize) -> Result<CandidateQueues> {
    if pool.is_empty() {
        return Err(Error::invalid("empty candidate pool"));
    }
    if specs.is_empty() {
        return Err(Error::invalid("no queue specs"));
    }
    let mut seen = BTreeSet::new();
    for s in specs {
        if !seen.insert(s.priority) {
            return Err(Error::invalid(format!("duplicate queue priority {}", s.priority)));
        }
    }
    let mut order: Vec<usize> = (0..specs.len()).collect();
    order.sort_by_key(|&q| specs[q].priority);
    let rankings: Vec<Vec<usize>> = specs.iter().map(|s| ranking(pool, s)).collect();
    let mut assigned = vec![false; pool.len()];
    let mut queues = vec![Vec::new(); specs.len()];
    match strategy {
        PartitionStrategy::Dfs => {
            for &q in &order {
                for &i in &rankings[q] {
                    if queues[q].len() == l_o {
                        break;
                    }
                    if !assigned[i] {
                        assigned[i] = true;
                        queues[q].push(i);
                    }
                }
            }
        }
        PartitionStrategy::Bfs => {
            let mut cursor = vec![0usize; specs.len()];
            let mut remaining = pool.len();
            loop {
                let mut progressed = false;
                for &q in &order {
                    if queues[q].len() == l_o || remaining == 0 {
                        continue;
                    }
                    let r = &rankings[q];
                    while cursor[q] < r.len() && assigned[r[cursor[q]]] {
                        cursor[q] += 1;
                    }
                    if let Some(&i) = r.get(cursor[q]) {
                        assigned[i] = true;
                        queues[q].push(i);
                        remaining -= 1;
                        progressed = true;
                    }
                }
                if !progressed {
                    break;
                }
            }
        }
    }
    let cursors = vec![0; specs.len()];
    Ok(CandidateQueues { queues, cursors, selected: vec![false; pool.len()] })
}
