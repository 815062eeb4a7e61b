//! The TOML configuration file shared by every command.
//!
//! Every table is optional and every key falls back to its default:
//!
//! ```toml
//! [engine]
//! l_o = 10
//! lambda_mmr = 0.8
//!
//! [sim]
//! sessions = 20000
//!
//! [train]
//! epochs = 10
//! loss_mode = "ordered_regression"
//! ```

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sortgen_core::simulator::SimConfig;
use sortgen_core::trainer::TrainConfig;
use sortgen_core::EngineConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub slates: usize,
    /// Simulated cost of one scorer invocation, in microseconds.
    pub overhead_us: u64,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { slates: 1000, overhead_us: 1000, seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub pools: usize,
    pub l_s: usize,
    pub l_o: usize,
    /// Random lists drawn per pool for the random-list reference ratio.
    pub random_lists: usize,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { pools: 100, l_s: 8, l_o: 4, random_lists: 100, seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub engine: EngineConfig,
    pub sim: SimConfig,
    pub train: TrainConfig,
    pub bench: BenchConfig,
    pub oracle: OracleConfig,
}

/// A loaded configuration plus whether the file pinned the engine section.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoadedConfig {
    pub app: AppConfig,
    pub engine_given: bool,
}

impl AppConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text)?;
        serde_path_to_error::deserialize(de).map_err(|e| anyhow::anyhow!("at `{}`: {}", e.path(), e.inner().message()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Overrides the seed of every component.
    pub fn set_seed(&mut self, seed: u64) {
        self.engine.seed = seed;
        self.sim.seed = seed;
        self.train.seed = seed;
        self.bench.seed = seed;
        self.oracle.seed = seed;
    }

    /// Validates each section and their agreement on shared dimensions.
    pub fn validate(&self) -> Result<()> {
        self.engine.validate().context("engine")?;
        self.sim.validate().context("sim")?;
        self.train.validate().context("train")?;
        let e = &self.engine;
        let s = &self.sim;
        for (name, a, b) in [("l_s", e.l_s, s.l_s), ("l_o", e.l_o, s.l_o), ("d_emb", e.d_emb, s.d_emb), ("d_user", e.d_user, s.d_user)] {
            if a != b {
                bail!("engine.{name} = {a} but sim.{name} = {b}");
            }
        }
        if self.oracle.l_o == 0 || self.oracle.l_o > self.oracle.l_s || self.oracle.l_o > e.l_o {
            bail!("oracle needs 1 <= l_o <= min(l_s, engine.l_o)");
        }
        Ok(())
    }
}

/// Reads `path`, or returns the defaults when no file is given.
pub fn load(path: Option<&Path>, seed: Option<u64>) -> Result<LoadedConfig> {
    let mut loaded = match path {
        None => LoadedConfig::default(),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            let table: toml::Table = text.parse().with_context(|| format!("parsing config {}", p.display()))?;
            let app = AppConfig::from_toml(&text).with_context(|| format!("config {}", p.display()))?;
            LoadedConfig { app, engine_given: table.contains_key("engine") }
        }
    };
    if let Some(seed) = seed {
        loaded.app.set_seed(seed);
    }
    loaded.app.validate()?;
    Ok(loaded)
}
