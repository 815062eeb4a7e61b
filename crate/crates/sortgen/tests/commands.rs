mod common;

use common::*;
use sortgen::checkpoint;
use sortgen::commands::*;
use sortgen::data::{CATALOG_FILE, POOLS_FILE, SIM_FILE, TRAIN_FILE};
use sortgen::evaluate::OBJECTIVES;
use sortgen::rerank::{parse_request, rerank, RequestError};
use sortgen::train::mode_label;
use sortgen_core::generation::arrangements;
use sortgen_core::nn::ParamStore;
use sortgen_core::LossMode;

#[test]
fn simulate_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let app = small_app();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let summary = cmd_simulate(&app, &a).unwrap();
    assert!(summary.contains("300 training sessions"), "{summary}");
    cmd_simulate(&app, &b).unwrap();
    for f in [CATALOG_FILE, TRAIN_FILE, POOLS_FILE, SIM_FILE] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f}");
    }
}

#[test]
fn simulate_rejects_small_catalog_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let mut app = small_app();
    app.sim.n_items = 20;
    let out = dir.path().join("never");
    let err = cmd_simulate(&app, &out).unwrap_err();
    assert!(format!("{err:#}").contains("n_items"), "{err:#}");
    assert!(!out.exists());
}

#[test]
fn zero_sessions_gives_empty_training_file() {
    let dir = tempfile::tempdir().unwrap();
    let mut app = small_app();
    app.sim.sessions = 0;
    cmd_simulate(&app, dir.path()).unwrap();
    assert!(read(&dir.path().join(TRAIN_FILE)).is_empty());
}

#[test]
fn train_requires_existing_data() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing-data");
    let err = cmd_train(&small_app(), &missing, &dir.path().join("m.ckpt"), None).unwrap_err();
    assert!(format!("{err:#}").contains("missing-data"), "{err:#}");
}

#[test]
fn train_writes_loadable_checkpoint_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let mut app = small_app();
    let data = dir.path().join("data");
    cmd_simulate(&app, &data).unwrap();
    for mode in [LossMode::OrderedRegression, LossMode::Pointwise] {
        app.train.loss_mode = mode;
        let ckpt = dir.path().join(format!("{}.ckpt", mode_label(mode)));
        let out = cmd_train(&app, &data, &ckpt, None).unwrap();
        assert_eq!(out.report.loss_mode, mode);
        assert!(out.summary().starts_with(&format!("mode {}", mode_label(mode))));

        let loaded = checkpoint::load(&ckpt).unwrap();
        assert_eq!(loaded.params.values(), out.checkpoint.params.values());
        assert_eq!(loaded.config().loss_mode, mode);

        let mut metrics = ckpt.as_os_str().to_owned();
        metrics.push(".metrics.tsv");
        let metrics = std::fs::read_to_string(metrics).unwrap();
        assert_eq!(metrics.lines().count(), out.report.epochs.len());
        assert!(metrics.lines().all(|l| l.split('\t').count() == 5));
    }
}

#[test]
fn best_epoch_zero_keeps_initial_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let mut app = small_app();
    app.train.lr = 0.0;
    let data = dir.path().join("data");
    cmd_simulate(&app, &data).unwrap();
    let ckpt = dir.path().join("m.ckpt");
    let out = cmd_train(&app, &data, &ckpt, None).unwrap();
    assert_eq!(out.report.best_epoch, 0);
    let init: ParamStore = sortgen_core::SortModel::new(&app.engine).unwrap().init_params(app.engine.seed);
    assert_eq!(checkpoint::load(&ckpt).unwrap().params.values(), init.values());
}

#[test]
fn rerank_returns_l_o_distinct_candidates() {
    let app = small_app();
    let ckpt = random_checkpoint(&app.engine, 1);
    let mut req = sample_request(&app.sim);
    assert_eq!(req.candidates.len(), 30);
    let full = rerank(&ckpt, &req).unwrap();
    req.lambda = Some(1.0);
    let pure = rerank(&ckpt, &req).unwrap();
    for r in [&full, &pure] {
        assert_eq!(r.ids.len(), app.engine.l_o);
        assert_eq!(r.source_queues.len(), app.engine.l_o);
        let mut ids = r.ids.clone();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), app.engine.l_o);
        assert!(r.ids.iter().all(|id| req.candidates.iter().any(|c| c.id == *id)));
    }
}

#[test]
fn rerank_errors() {
    let app = small_app();
    let ckpt = random_checkpoint(&app.engine, 1);
    let mut req = sample_request(&app.sim);
    req.candidates.truncate(9);
    assert_eq!(rerank(&ckpt, &req), Err(RequestError::InsufficientCandidates { got: 9, need: 10 }));
    assert!(rerank(&ckpt, &req).unwrap_err().to_string().starts_with("insufficient candidates"));

    let mut req = sample_request(&app.sim);
    req.candidates[1].id = req.candidates[0].id;
    assert!(matches!(rerank(&ckpt, &req), Err(RequestError::Invalid(_))));

    let mut req = sample_request(&app.sim);
    req.user_features.pop();
    assert!(matches!(rerank(&ckpt, &req), Err(RequestError::Invalid(_))));

    let err = parse_request(r#"{"user_features": [0.1], "candidates": [{"id": 1, "emb": [1.0], "price": "x"}]}"#).unwrap_err();
    assert!(err.to_string().contains("candidates[0].price"), "{err}");
    let err = parse_request(r#"{"user_features": [0.1]}"#).unwrap_err();
    assert!(err.to_string().contains("candidates"), "{err}");
}

#[test]
fn rerank_command_reads_request_file() {
    let dir = tempfile::tempdir().unwrap();
    let app = small_app();
    let ckpt = random_checkpoint(&app.engine, 2);
    let req = sample_request(&app.sim);
    let path = dir.path().join("req.json");
    std::fs::write(&path, serde_json::to_string(&req).unwrap()).unwrap();
    let a = cmd_rerank(&ckpt, &path).unwrap();
    assert_eq!(a.without_latency(), rerank(&ckpt, &req).unwrap().without_latency());
}

#[test]
fn evaluate_table_shape_and_monotone_curves() {
    let dir = tempfile::tempdir().unwrap();
    let app = small_app();
    let data = dir.path().join("data");
    cmd_simulate(&app, &data).unwrap();
    let ckpt = random_checkpoint(&app.engine, 3);
    let out = dir.path().join("curves.tsv");
    let curves = cmd_evaluate(&ckpt, &data, &out).unwrap();
    let table = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 4 * OBJECTIVES.len() * app.engine.l_o);
    for c in &curves {
        for o in 0..OBJECTIVES.len() {
            let n = rows
                .iter()
                .filter(|r| r.starts_with(&format!("{}\t{}\t", c.method.name(), OBJECTIVES[o])))
                .count();
            assert_eq!(n, app.engine.l_o);
            assert!(c.values[o].windows(2).all(|w| w[1] >= w[0]));
        }
    }
}

#[test]
fn evaluate_needs_a_checkpoint() {
    let err = open_checkpoint(std::path::Path::new("/nonexistent.ckpt"), None).unwrap_err();
    assert!(err.to_string().contains("/nonexistent.ckpt"));
}

#[test]
fn bench_counts_invocations_and_writes_traces() {
    let dir = tempfile::tempdir().unwrap();
    let app = small_app();
    let ckpt = random_checkpoint(&app.engine, 4);
    let traces = dir.path().join("traces.jsonl");
    let report = cmd_bench(&ckpt, &app, Some(&traces)).unwrap();
    let q = app.engine.queue_specs.len();
    assert!(report.generate.max_invocations() <= app.engine.l_o);
    assert_eq!(report.reference.min_invocations(), q * app.engine.l_o);
    assert_eq!(report.reference.max_invocations(), q * app.engine.l_o);
    assert_eq!(report.mismatches, 0);
    assert_eq!(report.overhead_ratio(), q as f64);
    assert!(report.reference.spun >= report.reference.overhead);
    assert!(report.render().contains("ratio reference/generate"));
    let text = std::fs::read_to_string(&traces).unwrap();
    assert_eq!(text.lines().count(), 2 * app.bench.slates);
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    for key in ["item_ids", "source_queues", "step_values", "invocations", "wall_ns"] {
        assert!(first.get(key).is_some(), "{key}");
    }
}

#[test]
fn oracle_scores_every_arrangement() {
    let app = small_app();
    let ckpt = random_checkpoint(&app.engine, 5);
    let study = cmd_oracle(&ckpt, &app).unwrap();
    assert_eq!(study.arrangements_per_pool, 1680);
    assert_eq!(arrangements(8, 4), 8 * 7 * 6 * 5);
    assert!(study.evaluated.iter().all(|&e| e == 1680));
    assert!(study.greedy_ratios.iter().all(|&r| r <= 1.0));
}

#[test]
fn oracle_guard_is_enforced() {
    let mut app = small_app();
    app.oracle.l_s = 30;
    app.oracle.l_o = 10;
    let ckpt = random_checkpoint(&app.engine, 5);
    let err = cmd_oracle(&ckpt, &app).unwrap_err();
    assert!(err.to_string().contains("guard"), "{err}");
}
