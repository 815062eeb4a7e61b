//! Cumulative ground-truth value curves for the slate generators.

use std::fmt::Write as _;

use anyhow::Result;
use sortgen_core::generation::{build_queues, generate, generate_template, ranking_top_queue_spec, SelectionParams};
use sortgen_core::nn::ParamStore;
use sortgen_core::simulator::{EvalPool, GroundTruthModel};
use sortgen_core::{Item, ObjectiveWeights, Scorer, SortModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Model-driven greedy generation over the objective queues.
    Sortgen,
    /// Top `l_o` items by prior click rate.
    Baseline,
    /// Fixed queue-index pattern.
    Template,
    /// Top `l_o` items by the weighted pointwise ranking score.
    RankingTopQueue,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Sortgen, Method::Baseline, Method::Template, Method::RankingTopQueue];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sortgen => "sortgen",
            Method::Baseline => "baseline",
            Method::Template => "template",
            Method::RankingTopQueue => "ranking_top_queue",
        }
    }
}

pub const OBJECTIVES: [&str; 4] = ["click", "pay", "gmv", "combined"];

/// Per-position cumulative values averaged over pools.
#[derive(Debug, Clone, PartialEq)]
pub struct Curves {
    pub method: Method,
    /// `values[o][t]` for objective `o` in [`OBJECTIVES`] order after `t + 1` items.
    pub values: [Vec<f64>; 4],
}

impl Curves {
    pub fn combined_at_end(&self) -> f64 {
        *self.values[3].last().expect("l_o >= 1")
    }
}

/// Picks the slate `method` would show for one pool.
pub fn select_slate<'a>(method: Method, model: &SortModel, params: &ParamStore, p: &'a EvalPool) -> Result<Vec<&'a Item>> {
    let cfg = model.config();
    let l_o = cfg.l_o;
    let top_by = |score: &dyn Fn(&Item) -> f64| {
        let mut idx: Vec<usize> = (0..p.pool.len()).collect();
        idx.sort_by(|&a, &b| score(&p.pool[b]).total_cmp(&score(&p.pool[a])).then(p.pool[a].id.cmp(&p.pool[b].id)));
        idx.truncate(l_o);
        idx.into_iter().map(|i| &p.pool[i]).collect::<Vec<_>>()
    };
    Ok(match method {
        Method::Sortgen => {
            let queues = build_queues(&p.pool, &cfg.queue_specs, cfg.partition_strategy, l_o)?;
            let sp = SelectionParams { l_o, weights: cfg.weights, lambda: cfg.lambda_mmr, window: cfg.window_w };
            generate(&p.pool, &p.user.context, &queues, &Scorer::new(model, params), &sp)?.items(&p.pool)
        }
        Method::Template => {
            let queues = build_queues(&p.pool, &cfg.queue_specs, cfg.partition_strategy, l_o)?;
            generate_template(&p.pool, &queues, &cfg.template, l_o)?.items(&p.pool)
        }
        Method::Baseline => top_by(&|i| i.prior_ctr),
        Method::RankingTopQueue => {
            let spec = ranking_top_queue_spec(&cfg.weights);
            top_by(&|i| sortgen_core::generation::composite_score(i, &spec))
        }
    })
}

/// Cumulative sums of the clamped ground-truth increments for one list,
/// as `[click, pay, gmv, combined]` per position.
pub fn cumulative_truth(gt: &GroundTruthModel, p: &EvalPool, list: &[&Item], w: &ObjectiveWeights) -> Vec<[f64; 4]> {
    let mut acc = [0.0; 3];
    gt.expected_increments(&p.user, list)
        .into_iter()
        .map(|inc| {
            for (a, v) in acc.iter_mut().zip(inc) {
                *a += v.max(0.0);
            }
            [acc[0], acc[1], acc[2], w.alpha * acc[0] + w.beta * acc[1] + w.gamma * acc[2]]
        })
        .collect()
}

pub fn evaluate_curves(
    model: &SortModel,
    params: &ParamStore,
    pools: &[EvalPool],
    gt: &GroundTruthModel,
    methods: &[Method],
) -> Result<Vec<Curves>> {
    anyhow::ensure!(!pools.is_empty(), "no evaluation pools");
    let cfg = model.config();
    let l_o = cfg.l_o;
    let mut out = Vec::with_capacity(methods.len());
    for &method in methods {
        let mut sums = vec![[0.0; 4]; l_o];
        for p in pools {
            let list = select_slate(method, model, params, p)?;
            for (s, c) in sums.iter_mut().zip(cumulative_truth(gt, p, &list, &cfg.weights)) {
                for k in 0..4 {
                    s[k] += c[k];
                }
            }
        }
        let n = pools.len() as f64;
        let values = std::array::from_fn(|k| sums.iter().map(|s| s[k] / n).collect());
        out.push(Curves { method, values });
    }
    Ok(out)
}

/// Tab-separated `method objective position value` table with a header row.
pub fn render_table(curves: &[Curves]) -> String {
    let mut out = String::from("method\tobjective\tposition\tvalue\n");
    for c in curves {
        for (o, name) in OBJECTIVES.iter().enumerate() {
            for (t, v) in c.values[o].iter().enumerate() {
                let _ = writeln!(out, "{}\t{name}\t{}\t{v}", c.method.name(), t + 1);
            }
        }
    }
    out
}
