mod common;

use common::*;
use proptest::prelude::*;
use sortgen_core::config::{default_queue_specs, validate_config};
use sortgen_core::generation::{build_queues, generate, SelectionParams};
use sortgen_core::simulator::ImpressionSample;
use sortgen_core::trainer::accumulate_gradients;
use sortgen_core::value::list_value;
use sortgen_core::{
    ConfigError, EngineConfig, HeadMode, Item, LabelVector, LossMode, PartitionStrategy, Scorer, SortModel,
};

#[test]
fn spec_examples() {
    assert_eq!(validate_config(&EngineConfig::default()), Ok(()));
    let short = EngineConfig { l_s: 5, ..EngineConfig::default() };
    assert_eq!(validate_config(&short), Err(ConfigError::OutputExceedsPool));
    assert_eq!(ConfigError::OutputExceedsPool.to_string(), "l_o exceeds l_s");
    let split = EngineConfig { d_model: 10, n_heads: 3, ..EngineConfig::default() };
    assert_eq!(validate_config(&split).unwrap_err().to_string(), "d_model not divisible by n_heads");
    let none = EngineConfig { queue_specs: vec![], template: vec![], ..EngineConfig::default() };
    assert_eq!(validate_config(&none), Err(ConfigError::NoQueues));
}

prop_compose! {
    fn any_config()(l_o in 1usize..8, extra in 0usize..6, max_count in 1usize..9, d_emb in 1usize..6,
                    d_user in 1usize..6, d_position in 1usize..4, n_heads in 1usize..4, per_head in 1usize..5,
                    n_layers in 1usize..3, head_hidden in 1usize..6, q in 1usize..4, bfs in any::<bool>(),
                    literal in any::<bool>(), lambda in 0.0f64..=1.0, window in 1usize..6)
                   -> EngineConfig {
        EngineConfig {
            l_s: l_o + extra,
            l_o,
            max_count,
            d_emb,
            d_user,
            d_position,
            d_model: n_heads * per_head,
            n_heads,
            n_layers,
            head_hidden,
            head_mode: if literal { HeadMode::Literal } else { HeadMode::Monotone },
            queue_specs: default_queue_specs().into_iter().take(q).collect(),
            partition_strategy: if bfs { PartitionStrategy::Bfs } else { PartitionStrategy::Dfs },
            lambda_mmr: lambda,
            window_w: window,
            template: vec![0],
            ..EngineConfig::default()
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Whatever validates must run through model, values, training and generation.
    #[test]
    fn valid_configs_run_end_to_end(cfg in any_config(), seed in any::<u64>()) {
        prop_assume!(validate_config(&cfg).is_ok());
        let model = SortModel::new(&cfg).unwrap();
        let mut params = model.init_params(seed);
        let mut r = rng(seed);
        let pool = random_pool(&mut r, cfg.l_s, cfg.d_emb);
        let user = random_user(&mut r, cfg.d_user);

        let list: Vec<&Item> = pool.iter().take(cfg.l_o).collect();
        let input = model.assemble_input(&params, &[(&list, &user)]).unwrap();
        let s = model.forward(&params, &input).unwrap().pop().unwrap();
        list_value(&s.click, &s.pay, &list, &cfg.weights).unwrap();

        let sample = ImpressionSample {
            user: user.clone(),
            items: list.iter().map(|i| (*i).clone()).collect(),
            labels: LabelVector::new(vec![true; cfg.l_o], vec![false; cfg.l_o]).unwrap(),
        };
        for mode in [LossMode::OrderedRegression, LossMode::Pointwise] {
            let loss = accumulate_gradients(&model, &mut params, &[&sample], mode).unwrap();
            prop_assert!(loss.is_finite());
        }

        let queues = build_queues(&pool, &cfg.queue_specs, cfg.partition_strategy, cfg.l_o).unwrap();
        let p = SelectionParams { l_o: cfg.l_o, weights: cfg.weights, lambda: cfg.lambda_mmr, window: cfg.window_w };
        let trace = generate(&pool, &user, &queues, &Scorer::new(&model, &params), &p).unwrap();
        prop_assert_eq!(trace.item_ids.len(), cfg.l_o);
    }
}
