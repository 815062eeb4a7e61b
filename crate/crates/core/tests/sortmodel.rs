mod common;

use common::*;
use sortgen_core::model::SurvivalPair;
use sortgen_core::nn::{finite_diff_check, ParamStore};
use sortgen_core::simulator::ImpressionSample;
use sortgen_core::trainer::{accumulate_gradients, sample_loss};
use sortgen_core::{EngineConfig, HeadMode, Item, LossMode, SortModel, UserContext};

/// Parameter count written out from the architecture: input projection,
/// position table, per block two layer norms + four attention projections +
/// the 4x FFN, final layer norm, and two heads.
fn hand_count(c: &EngineConfig) -> usize {
    let d = c.d_emb + c.d_position + c.d_user + c.d_score;
    let m = c.d_model;
    let input = d * m + m;
    let position = c.l_o * c.d_position;
    let block = 2 * (2 * m) + 4 * (m * m + m) + (m * 4 * m + 4 * m) + (4 * m * m + m);
    let final_ln = 2 * m;
    let head = |out: usize| m * c.head_hidden + c.head_hidden + c.head_hidden * out + out;
    let heads = match c.head_mode {
        HeadMode::Monotone => 2 * (head(1) + c.l_o * c.max_count),
        HeadMode::Literal => 2 * head(c.max_count),
    };
    input + position + c.n_layers * block + final_ln + heads
}

#[test]
fn parameter_count_matches_hand_formula() {
    let mono = EngineConfig::default();
    let lit = EngineConfig { head_mode: HeadMode::Literal, ..EngineConfig::default() };
    assert_eq!(SortModel::new(&mono).unwrap().param_count(), hand_count(&mono));
    assert_eq!(SortModel::new(&lit).unwrap().param_count(), hand_count(&lit));
    assert_eq!(hand_count(&mono), 28_626);
    assert_eq!(hand_count(&lit), 29_020);
    let model = SortModel::new(&mono).unwrap();
    assert_eq!(model.init_params(1).num_scalars(), 28_626);
}

#[test]
fn init_is_deterministic_per_seed() {
    let model = SortModel::new(&EngineConfig::default()).unwrap();
    assert_eq!(model.init_params(5).values(), model.init_params(5).values());
    assert_ne!(model.init_params(5).values(), model.init_params(6).values());
}

fn score(model: &SortModel, params: &ParamStore, items: &[&Item], user: &UserContext) -> SurvivalPair {
    let input = model.assemble_input(params, &[(items, user)]).unwrap();
    model.forward(params, &input).unwrap().pop().unwrap()
}

#[test]
fn assembled_input_layout() {
    let cfg = EngineConfig::default();
    assert_eq!(cfg.d_input(), 22);
    let model = SortModel::new(&cfg).unwrap();
    let params = model.init_params(2);
    let mut r = rng(3);
    let pool = random_pool(&mut r, 2, 8);
    let user = random_user(&mut r, 8);
    let refs: Vec<&Item> = pool.iter().collect();
    let input = model.assemble_input(&params, &[(&refs, &user)]).unwrap();
    assert_eq!((input.n, input.l, input.d), (1, 2, 22));
    let row = |j: usize| &input.data[j * 22..(j + 1) * 22];
    assert_eq!(&row(0)[12..20], &row(1)[12..20]);
    assert_eq!(&row(0)[12..20], user.features.as_slice());
    assert_eq!(&row(1)[..8], pool[1].embedding.as_slice());
    assert_eq!(&row(1)[20..], &[pool[1].prior_ctr, pool[1].prior_cvr]);
    assert!(model.assemble_input(&params, &[(&[], &user)]).is_err());
    let long = random_pool(&mut r, 11, 8);
    let long: Vec<&Item> = long.iter().collect();
    assert!(model.assemble_input(&params, &[(&long, &user)]).is_err());
}

#[test]
fn fresh_logits_stay_unsaturated() {
    for head_mode in [HeadMode::Monotone, HeadMode::Literal] {
        let model = SortModel::new(&EngineConfig { head_mode, ..EngineConfig::default() }).unwrap();
        for seed in 0..100 {
            let params = model.init_params(seed);
            let mut r = rng(1000 + seed);
            let pool = random_pool(&mut r, 10, 8);
            let refs: Vec<&Item> = pool.iter().collect();
            let user = random_user(&mut r, 8);
            let input = model.assemble_input(&params, &[(&refs, &user)]).unwrap();
            let (out, _) = model.forward_train(&params, &input).unwrap().pop().unwrap();
            for z in out.click_logits.iter().chain(&out.pay_logits).filter(|z| z.is_finite()) {
                assert!(z.abs() < 20.0, "seed {seed}: logit {z}");
            }
        }
    }
}

#[test]
fn survival_shape_and_monotonicity() {
    let model = SortModel::new(&EngineConfig::default()).unwrap();
    let params = model.init_params(4);
    let mut r = rng(5);
    let pool = random_pool(&mut r, 10, 8);
    let refs: Vec<&Item> = pool.iter().collect();
    let s = score(&model, &params, &refs, &random_user(&mut r, 8));
    for m in [&s.click, &s.pay] {
        for j in 1..=10 {
            for i in 1..=10 {
                let p = m.get(i, j);
                assert!((0.0..=1.0).contains(&p));
                if i > j {
                    assert_eq!(p, 0.0);
                } else if i < 10 {
                    assert!(p >= m.get(i + 1, j));
                }
            }
        }
    }
}

#[test]
fn zero_head_weights() {
    for head_mode in [HeadMode::Literal, HeadMode::Monotone] {
        let model = SortModel::new(&EngineConfig { head_mode, ..EngineConfig::default() }).unwrap();
        let mut params = model.init_params(9);
        let ids: Vec<_> = params.ids().filter(|&id| params.name(id).starts_with("head.")).collect();
        for id in ids {
            params.value_mut(id).fill(0.0);
        }
        let mut r = rng(1);
        let pool = random_pool(&mut r, 4, 8);
        let refs: Vec<&Item> = pool.iter().collect();
        let s = score(&model, &params, &refs, &random_user(&mut r, 8));
        for j in 1..=4 {
            for i in 1..=j {
                let want = match head_mode {
                    HeadMode::Literal => 0.5,
                    // Thresholds accumulate softplus(0) = ln 2 per step.
                    HeadMode::Monotone => 1.0 / (1.0 + 2f64.powi(i as i32 - 1)),
                };
                assert!((s.click.get(i, j) - want).abs() < 1e-12);
                assert!((s.pay.get(i, j) - want).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn identical_sequences_in_a_batch_agree() {
    let model = SortModel::new(&EngineConfig::default()).unwrap();
    let params = model.init_params(2);
    let mut r = rng(8);
    let pool = random_pool(&mut r, 6, 8);
    let refs: Vec<&Item> = pool.iter().collect();
    let user = random_user(&mut r, 8);
    let input = model.assemble_input(&params, &[(&refs, &user), (&refs, &user), (&refs, &user)]).unwrap();
    let out = model.forward(&params, &input).unwrap();
    assert_eq!(out[0], out[1]);
    assert_eq!(out[1], out[2]);
}

#[test]
fn prefix_rows_ignore_later_positions() {
    let model = SortModel::new(&EngineConfig::default()).unwrap();
    for seed in 0..20 {
        let params = model.init_params(seed);
        let mut r = rng(seed + 50);
        let pool = random_pool(&mut r, 10, 8);
        let user = random_user(&mut r, 8);
        let full: Vec<&Item> = pool.iter().collect();
        let whole = score(&model, &params, &full, &user);
        for t in 1..10 {
            let part = score(&model, &params, &full[..t], &user);
            for j in 1..=t {
                assert_eq!(part.click.position(j), whole.click.position(j));
                assert_eq!(part.pay.position(j), whole.pay.position(j));
            }
        }
    }
}

fn batch_loss(model: &SortModel, params: &ParamStore, batch: &[&ImpressionSample], mode: LossMode) -> f64 {
    let m = model.config().max_count;
    batch
        .iter()
        .map(|s| {
            let refs: Vec<&Item> = s.items.iter().collect();
            let input = model.assemble_input(params, &[(&refs, &s.user)]).unwrap();
            let (out, _) = model.forward_train(params, &input).unwrap().pop().unwrap();
            sample_loss(mode, m, &out, s).unwrap().0
        })
        .sum()
}

#[test]
fn full_loss_gradients_match_finite_differences() {
    let data = small_dataset(40, 0);
    for head_mode in [HeadMode::Monotone, HeadMode::Literal] {
        let model = SortModel::new(&EngineConfig { head_mode, ..EngineConfig::default() }).unwrap();
        for mode in [LossMode::OrderedRegression, LossMode::Pointwise] {
            let mut params = model.init_params(11);
            let batch = [&data.samples[3], &data.samples[17]];
            params.zero_grad();
            accumulate_gradients(&model, &mut params, &batch, mode).unwrap();
            let err = finite_diff_check(&mut params, |p| batch_loss(&model, p, &batch, mode), 1e-5, 60, 21).unwrap();
            assert!(err < 1e-4, "{head_mode:?} {mode:?}: max relative error {err}");
        }
    }
}
