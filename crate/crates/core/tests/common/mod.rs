#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sortgen_core::simulator::{simulate, Dataset, SimConfig};
use sortgen_core::{EngineConfig, Item, UserContext};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

pub fn random_item(rng: &mut ChaCha8Rng, id: u64, d_emb: usize) -> Item {
    Item {
        id,
        embedding: unit(rng, d_emb),
        price: rng.random_range(1.0..20.0),
        prior_ctr: rng.random_range(0.01..0.5),
        prior_cvr: rng.random_range(0.01..0.6),
        category: rng.random_range(0..4),
    }
}

pub fn random_pool(rng: &mut ChaCha8Rng, n: usize, d_emb: usize) -> Vec<Item> {
    (0..n).map(|i| random_item(rng, 100 + i as u64, d_emb)).collect()
}

pub fn random_user(rng: &mut ChaCha8Rng, d_user: usize) -> UserContext {
    UserContext::new((0..d_user).map(|_| rng.random_range(-1.0..1.0)).collect())
}

/// A small simulated dataset sized for quick tests.
pub fn small_dataset(sessions: usize, pools: usize) -> Dataset {
    simulate(&SimConfig { sessions, eval_pools: pools, ..SimConfig::default() }).unwrap()
}

pub fn default_config() -> EngineConfig {
    EngineConfig::default()
}
