#![allow(dead_code)]

use std::path::Path;

use sortgen::checkpoint::Checkpoint;
use sortgen::config::AppConfig;
use sortgen::data::ItemRecord;
use sortgen::rerank::RerankRequest;
use sortgen_core::simulator::{simulate, SimConfig};
use sortgen_core::{EngineConfig, SortModel};

/// Small but complete configuration for fast command tests.
pub fn small_app() -> AppConfig {
    let mut app = AppConfig::default();
    app.engine = EngineConfig { d_model: 8, head_hidden: 8, n_layers: 1, ..EngineConfig::default() };
    app.sim = SimConfig { sessions: 300, eval_pools: 12, ..SimConfig::default() };
    app.train.epochs = 2;
    app.bench.slates = 5;
    app.bench.overhead_us = 50;
    app.oracle.pools = 4;
    app.oracle.random_lists = 20;
    app
}

pub fn random_checkpoint(engine: &EngineConfig, seed: u64) -> Checkpoint {
    let params = SortModel::new(engine).unwrap().init_params(seed);
    Checkpoint::new(engine, params).unwrap()
}

/// A request over the first held-out pool of a small simulation.
pub fn sample_request(sim: &SimConfig) -> RerankRequest {
    let data = simulate(&SimConfig { sessions: 0, eval_pools: 1, ..sim.clone() }).unwrap();
    let p = &data.pools[0];
    RerankRequest {
        format: None,
        user_features: p.user.context.features.clone(),
        candidates: p.pool.iter().map(ItemRecord::from).collect(),
        weights: None,
        lambda: None,
    }
}

pub fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap()
}
