mod common;

use common::*;
use sortgen_core::generation::{build_queues, generate, SelectionParams};
use sortgen_core::model::{SurvivalMatrix, SurvivalPair};
use sortgen_core::simulator::{sample_user, simulate_session, SimConfig};
use sortgen_core::config::default_queue_specs;
use sortgen_core::{Item, Objective, ObjectiveWeights, PartitionStrategy, SlateScorer, UserContext};

#[test]
fn session_counts_are_consistent() {
    let cfg = SimConfig::default();
    let data = small_dataset(0, 0);
    let mut r = rng(4);
    let mut first = 0usize;
    let mut last = 0usize;
    let n = 10_000;
    for k in 0..n {
        let user = sample_user(&data.catalog, &cfg, &mut r);
        let list: Vec<&Item> = (0..10).map(|i| &data.catalog[(k * 13 + i * 17) % data.catalog.len()]).collect();
        let labels = simulate_session(&user, &list, &cfg.ground_truth, &mut r);
        for obj in [Objective::Click, Objective::Pay] {
            let cum = labels.cumulative(obj);
            for j in 0..10 {
                assert!(cum[j] <= j + 1);
                if j > 0 {
                    assert!(cum[j] >= cum[j - 1]);
                }
            }
        }
        for (c, p) in labels.clicks().iter().zip(labels.pays()) {
            assert!(c | !p);
        }
        first += labels.clicks()[0] as usize;
        last += labels.clicks()[9] as usize;
    }
    assert!(first > last, "position 1 CTR {first} vs position 10 CTR {last}");
}

/// Click survival equal to the running sum of prior_ctr (capped at 1); no pays.
struct PriorScorer;

impl SlateScorer for PriorScorer {
    fn score_batch(&self, _u: &UserContext, lists: &[&[&Item]]) -> sortgen_core::Result<Vec<SurvivalPair>> {
        lists
            .iter()
            .map(|l| {
                let mut acc = 0.0;
                let cum: Vec<f64> = l.iter().map(|i| { acc += i.prior_ctr; acc.min(1.0) }).collect();
                Ok(SurvivalPair {
                    click: SurvivalMatrix::from_fn(Objective::Click, l.len(), 1, |_, j| cum[j - 1])?,
                    pay: SurvivalMatrix::from_fn(Objective::Pay, l.len(), 1, |_, _| 0.0)?,
                })
            })
            .collect()
    }
}

#[test]
fn generated_lists_never_repeat_items() {
    let data = small_dataset(0, 0);
    let cfg = SimConfig::default();
    let mut r = rng(77);
    for trial in 0..10_000u64 {
        let user = sample_user(&data.catalog, &cfg, &mut r);
        let pool = sortgen_core::simulator::sample_pool(&data.catalog, 30, &mut r);
        let strategy = if trial % 2 == 0 { PartitionStrategy::Bfs } else { PartitionStrategy::Dfs };
        let queues = build_queues(&pool, &default_queue_specs(), strategy, 10).unwrap();
        let lambda = [1.0, 0.8, 0.5][trial as usize % 3];
        let p = SelectionParams { l_o: 10, weights: ObjectiveWeights::default(), lambda, window: 5 };
        let mut ids = generate(&pool, &user.context, &queues, &PriorScorer, &p).unwrap().item_ids;
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 10);
    }
}
