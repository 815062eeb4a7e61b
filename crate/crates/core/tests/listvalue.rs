mod common;

use common::*;
use proptest::prelude::*;
use sortgen_core::model::SurvivalMatrix;
use sortgen_core::value::{
    expected_count, incremental_value, list_value, ordered_regression_loss, clamped_increment,
};
use sortgen_core::{EngineConfig, HeadMode, Item, LabelVector, Objective, ObjectiveWeights, SortModel};

/// A random survival matrix with valid structure (zero above the diagonal).
fn random_matrix(values: &[f64], l: usize) -> SurvivalMatrix {
    SurvivalMatrix::from_fn(Objective::Click, l, l, |i, j| if i <= j { values[(j - 1) * l + i - 1] } else { 0.0 }).unwrap()
}

proptest! {
    #[test]
    fn increments_telescope(values in prop::collection::vec(0.0f64..1.0, 100), l in 1usize..=10) {
        let m = random_matrix(&values, l);
        let sum: f64 = (1..=l).map(|t| incremental_value(&m, t).unwrap()).sum();
        prop_assert!((sum - expected_count(&m, l).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn value_is_linear_in_weights(values in prop::collection::vec(0.0f64..1.0, 100), pays in prop::collection::vec(0.0f64..1.0, 100),
                                  a in 0.0f64..10.0, b in 0.0f64..10.0, g in 0.1f64..10.0, c in 0.01f64..100.0) {
        let click = random_matrix(&values, 10);
        let pay = random_matrix(&pays, 10);
        let mut r = rng(1);
        let pool = random_pool(&mut r, 10, 4);
        let items: Vec<&Item> = pool.iter().collect();
        let w = ObjectiveWeights::new(a, b, g);
        let v = list_value(&click, &pay, &items, &w).unwrap();
        let v2 = list_value(&click, &pay, &items, &w.scaled(c)).unwrap();
        prop_assert!((v2.combined - c * v.combined).abs() <= 1e-9 * (1.0 + v2.combined.abs()));
        prop_assert!((v.combined - (a * v.v_click + b * v.v_pay + g * v.v_gmv)).abs() < 1e-9);
    }
}

#[test]
fn doubling_weights_doubles_value_and_keeps_argmax() {
    let model = SortModel::new(&EngineConfig::default()).unwrap();
    let params = model.init_params(4);
    let mut r = rng(6);
    let pool = random_pool(&mut r, 30, 8);
    let user = random_user(&mut r, 8);
    let lists: Vec<Vec<&Item>> = (0..40).map(|k| (0..10).map(|i| &pool[(k + 7 * i) % 30]).collect()).collect();
    let refs: Vec<(&[&Item], &sortgen_core::UserContext)> = lists.iter().map(|l| (l.as_slice(), &user)).collect();
    let input = model.assemble_input(&params, &refs).unwrap();
    let scored = model.forward(&params, &input).unwrap();
    let w = ObjectiveWeights::default();
    let argmax = |w: &ObjectiveWeights| {
        let vals: Vec<f64> = scored
            .iter()
            .zip(&lists)
            .map(|(s, l)| list_value(&s.click, &s.pay, l, w).unwrap().combined)
            .collect();
        let best = (0..vals.len()).fold(0, |b, k| if vals[k] > vals[b] { k } else { b });
        (best, vals)
    };
    let (b1, v1) = argmax(&w);
    for c in [2.0, 0.3, 17.0] {
        let (b2, v2) = argmax(&w.scaled(c));
        assert_eq!(b1, b2);
        if c == 2.0 {
            for (x, y) in v1.iter().zip(&v2) {
                assert_eq!(2.0 * x, *y);
            }
        }
    }
}

#[test]
fn monotone_increments_are_non_negative_after_clamping() {
    let model = SortModel::new(&EngineConfig { head_mode: HeadMode::Monotone, ..EngineConfig::default() }).unwrap();
    for seed in 0..20 {
        let params = model.init_params(seed);
        let mut r = rng(seed);
        let pool = random_pool(&mut r, 10, 8);
        let items: Vec<&Item> = pool.iter().collect();
        let user = random_user(&mut r, 8);
        let input = model.assemble_input(&params, &[(&items, &user)]).unwrap();
        let s = model.forward(&params, &input).unwrap().pop().unwrap();
        for t in 1..=10 {
            assert!(clamped_increment(&s.click, t).unwrap() >= 0.0);
            assert!(clamped_increment(&s.pay, t).unwrap() >= 0.0);
        }
    }
}

#[test]
fn lowering_a_satisfied_threshold_raises_the_loss() {
    let labels = LabelVector::new(vec![true, false, true], vec![false, false, true]).unwrap();
    let base = |delta: f64| {
        let click = SurvivalMatrix::from_fn(Objective::Click, 3, 3, |i, j| {
            let p = if i <= j { 0.6 / i as f64 } else { 0.0 };
            // (i=1, j=2): one click by position 2, so the label is "count >= 1".
            if (i, j) == (1, 2) { p - delta } else { p }
        })
        .unwrap();
        let pay = SurvivalMatrix::from_fn(Objective::Pay, 3, 3, |i, j| if i <= j { 0.3 / i as f64 } else { 0.0 }).unwrap();
        ordered_regression_loss(&click, &pay, &labels).unwrap()
    };
    let mut last = base(0.0);
    for k in 1..=5 {
        let next = base(0.05 * k as f64);
        assert!(next > last);
        last = next;
    }
}
