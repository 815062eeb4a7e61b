//! Greedy regret against exhaustive search on small pools.

use anyhow::{ensure, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sortgen_core::generation::{arrangements, build_queues, exhaustive_oracle, generate, random_list_values, SelectionParams};
use sortgen_core::simulator::{sample_catalog, sample_pool, sample_user, SimConfig};
use sortgen_core::Scorer;

use crate::checkpoint::Checkpoint;
use crate::config::OracleConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleStudy {
    pub arrangements_per_pool: u128,
    /// Arrangements actually scored, per pool.
    pub evaluated: Vec<u128>,
    /// Greedy value over the exhaustive optimum, per pool.
    pub greedy_ratios: Vec<f64>,
    /// Mean random-list value over the optimum, per pool.
    pub random_ratios: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

impl OracleStudy {
    pub fn mean_greedy(&self) -> f64 {
        mean(&self.greedy_ratios)
    }

    pub fn mean_random(&self) -> f64 {
        mean(&self.random_ratios)
    }

    /// Pools where greedy beat the exhaustive optimum, which would be a bug.
    pub fn violations(&self) -> usize {
        self.greedy_ratios.iter().filter(|r| **r > 1.0).count()
    }

    pub fn passed(&self) -> bool {
        self.violations() == 0 && self.mean_greedy() > self.mean_random()
    }

    pub fn render(&self) -> String {
        let mut sorted = self.greedy_ratios.clone();
        sorted.sort_by(f64::total_cmp);
        let q = |p: f64| sorted[((sorted.len() - 1) as f64 * p).round() as usize];
        format!(
            "pools {}  arrangements per pool {}\n\
             greedy/optimal  mean {:.4}  min {:.4}  p10 {:.4}  median {:.4}  max {:.4}  exact optimum {}\n\
             random/optimal  mean {:.4}\n\
             pools with greedy above optimum {}",
            self.greedy_ratios.len(),
            self.arrangements_per_pool,
            self.mean_greedy(),
            q(0.0),
            q(0.1),
            q(0.5),
            q(1.0),
            self.greedy_ratios.iter().filter(|r| **r == 1.0).count(),
            self.mean_random(),
            self.violations()
        )
    }
}

/// Runs greedy generation with `lambda = 1` and exhaustive search on
/// `config.pools` simulator pools of `config.l_s` items, valuing every list
/// with the checkpoint's own model.
pub fn run_oracle(ckpt: &Checkpoint, sim: &SimConfig, config: &OracleConfig) -> Result<OracleStudy> {
    let cfg = ckpt.config();
    ensure!(config.pools > 0 && config.random_lists > 0, "oracle needs pools and random lists");
    ensure!(config.l_o <= cfg.l_o, "oracle l_o exceeds the model's l_o");
    let sim = SimConfig { d_emb: cfg.d_emb, d_user: cfg.d_user, l_s: config.l_s, l_o: config.l_o, ..sim.clone() };
    let catalog = sample_catalog(&sim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let scorer = Scorer::new(&ckpt.model, &ckpt.params);
    let params = SelectionParams { l_o: config.l_o, weights: cfg.weights, lambda: 1.0, window: cfg.window_w };
    let mut study = OracleStudy {
        arrangements_per_pool: arrangements(config.l_s, config.l_o),
        evaluated: Vec::with_capacity(config.pools),
        greedy_ratios: Vec::with_capacity(config.pools),
        random_ratios: Vec::with_capacity(config.pools),
    };
    for _ in 0..config.pools {
        let user = sample_user(&catalog, &sim, &mut rng).context;
        let pool = sample_pool(&catalog, config.l_s, &mut rng);
        let best = exhaustive_oracle(&pool, &user, &scorer, &cfg.weights, config.l_o)?;
        let queues = build_queues(&pool, &cfg.queue_specs, cfg.partition_strategy, config.l_o)?;
        let greedy = generate(&pool, &user, &queues, &scorer, &params)?;
        let g = greedy.final_value().expect("non-empty slate").combined;
        let random = random_list_values(&pool, &user, &scorer, &cfg.weights, config.l_o, config.random_lists, &mut rng)?;
        let opt = best.best.combined;
        ensure!(opt > 0.0, "non-positive optimum {opt}");
        study.evaluated.push(best.evaluated);
        study.greedy_ratios.push(g / opt);
        study.random_ratios.push(random.iter().map(|v| v.combined / opt).sum::<f64>() / random.len() as f64);
    }
    Ok(study)
}
