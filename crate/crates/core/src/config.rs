//! Domain types and engine configuration shared by every other module.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{ConfigError, Error, Result};
use crate::generation::{QueueSpec, ScoreTerms};
use crate::math;

/// A candidate item as delivered by the ranking stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub id: u64,
    /// Unit-norm content embedding.
    pub embedding: Vec<f64>,
    pub price: f64,
    pub prior_ctr: f64,
    pub prior_cvr: f64,
    pub category: u32,
}

impl Item {
    /// Checks the item invariants against the configured embedding width.
    pub fn validate(&self, d_emb: usize) -> Result<()> {
        if self.embedding.len() != d_emb {
            return Err(Error::shape(format!(
                "item {} embedding has {} components, expected {}",
                self.id,
                self.embedding.len(),
                d_emb
            )));
        }
        let norm = math::sqrt(math::dot(&self.embedding, &self.embedding));
        if !((norm - 1.0).abs() <= 1e-6) {
            return Err(Error::invalid(format!(
                "item {} embedding norm {norm} is not 1",
                self.id
            )));
        }
        if !(0.0..=1.0).contains(&self.prior_ctr) {
            return Err(Error::invalid(format!("item {} prior_ctr outside [0,1]", self.id)));
        }
        if !(0.0..=1.0).contains(&self.prior_cvr) {
            return Err(Error::invalid(format!("item {} prior_cvr outside [0,1]", self.id)));
        }
        if !(self.price >= 0.0) || !self.price.is_finite() {
            return Err(Error::invalid(format!("item {} price must be non-negative", self.id)));
        }
        Ok(())
    }
}

/// Raw user feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct UserContext {
    pub features: Vec<f64>,
}

impl UserContext {
    pub fn new(features: Vec<f64>) -> Self {
        Self { features }
    }

    pub fn validate(&self, d_user: usize) -> Result<()> {
        if self.features.len() != d_user {
            return Err(Error::shape(format!(
                "user features have {} components, expected {d_user}",
                self.features.len()
            )));
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("user features".into()));
        }
        Ok(())
    }
}

/// Inference-time trade-off between click, conversion and GMV value.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ObjectiveWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl ObjectiveWeights {
    pub const fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self { alpha, beta, gamma }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let all = [self.alpha, self.beta, self.gamma];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) || all.iter().sum::<f64>() <= 0.0 {
            return Err(ConfigError::Weights);
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::new(self.alpha * c, self.beta * c, self.gamma * c)
    }
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        Self::new(5.0, 1.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PartitionStrategy {
    /// Fill queues one at a time in priority order.
    Dfs,
    /// Round-robin: each queue takes its best remaining item per round.
    #[default]
    Bfs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LossMode {
    #[default]
    OrderedRegression,
    Pointwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum HeadMode {
    /// Shared per-position score minus strictly increasing thresholds.
    #[default]
    Monotone,
    /// One independent logit per threshold.
    Literal,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct EngineConfig {
    /// Candidate pool length.
    pub l_s: usize,
    /// Output slate length.
    pub l_o: usize,
    pub d_emb: usize,
    pub d_user: usize,
    pub d_position: usize,
    pub d_score: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub head_hidden: usize,
    /// Number of count thresholds per position.
    pub max_count: usize,
    pub head_mode: HeadMode,
    pub lambda_mmr: f64,
    pub window_w: usize,
    pub queue_specs: Vec<QueueSpec>,
    pub partition_strategy: PartitionStrategy,
    pub loss_mode: LossMode,
    pub weights: ObjectiveWeights,
    /// Queue-index pattern used by the template baseline.
    pub template: Vec<usize>,
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            l_s: 30,
            l_o: 10,
            d_emb: 8,
            d_user: 8,
            d_position: 4,
            d_score: 2,
            d_model: 32,
            n_layers: 2,
            n_heads: 2,
            head_hidden: 32,
            max_count: 10,
            head_mode: HeadMode::Monotone,
            lambda_mmr: 0.8,
            window_w: 5,
            queue_specs: default_queue_specs(),
            partition_strategy: PartitionStrategy::Bfs,
            loss_mode: LossMode::OrderedRegression,
            weights: ObjectiveWeights::default(),
            template: vec![0, 1, 0, 0, 0, 0, 0, 0, 2, 0],
            seed: 7,
        }
    }
}

/// Click, conversion and GMV queues, in that priority order.
pub fn default_queue_specs() -> Vec<QueueSpec> {
    vec![
        QueueSpec::new("click", ScoreTerms { ctr: 1.0, ..ScoreTerms::ZERO }, 0),
        QueueSpec::new("conversion", ScoreTerms { ctr_cvr: 1.0, ..ScoreTerms::ZERO }, 1),
        QueueSpec::new("gmv", ScoreTerms { ctr_cvr_price: 1.0, ..ScoreTerms::ZERO }, 2),
    ]
}

impl EngineConfig {
    /// Width of the concatenated model input.
    pub fn d_input(&self) -> usize {
        self.d_emb + self.d_position + self.d_user + self.d_score
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        validate_config(self)
    }
}

/// Returns the first violated invariant of `config`, if any.
pub fn validate_config(config: &EngineConfig) -> Result<(), ConfigError> {
    if config.l_o == 0 {
        return Err(ConfigError::EmptyOutput);
    }
    if config.l_o > config.l_s {
        return Err(ConfigError::OutputExceedsPool);
    }
    if config.max_count == 0 {
        return Err(ConfigError::ZeroMaxCount);
    }
    if config.max_count > config.l_o {
        return Err(ConfigError::MaxCountExceedsOutput);
    }
    for (dim, name) in [
        (config.d_emb, "d_emb must be positive"),
        (config.d_user, "d_user must be positive"),
        (config.d_position, "d_position must be positive"),
        (config.d_model, "d_model must be positive"),
        (config.head_hidden, "head_hidden must be positive"),
    ] {
        if dim == 0 {
            return Err(ConfigError::Dimension(name));
        }
    }
    if config.d_score != 2 {
        return Err(ConfigError::Dimension("d_score must be 2 (prior_ctr, prior_cvr)"));
    }
    if config.n_heads == 0 || config.d_model % config.n_heads != 0 {
        return Err(ConfigError::HeadSplit);
    }
    if config.n_layers == 0 {
        return Err(ConfigError::NoLayers);
    }
    if config.window_w == 0 {
        return Err(ConfigError::ZeroWindow);
    }
    if !(0.0..=1.0).contains(&config.lambda_mmr) {
        return Err(ConfigError::Lambda);
    }
    config.weights.validate()?;
    if config.queue_specs.is_empty() {
        return Err(ConfigError::NoQueues);
    }
    let mut priorities = BTreeSet::new();
    for spec in &config.queue_specs {
        if spec.terms.is_zero() {
            return Err(ConfigError::ZeroQueue(spec.name.clone()));
        }
        if !priorities.insert(spec.priority) {
            return Err(ConfigError::DuplicatePriority(spec.priority));
        }
    }
    let q = config.queue_specs.len();
    if let Some(&bad) = config.template.iter().find(|&&t| t >= q) {
        return Err(ConfigError::Template(bad, q));
    }
    Ok(())
}

/// An ordered prefix or full slate drawn from a candidate pool.
#[derive(Debug, Clone, PartialEq)]
pub struct SubList<'a> {
    pub items: Vec<&'a Item>,
    /// Queue each item was drawn from.
    pub source_queues: Vec<usize>,
}

impl<'a> SubList<'a> {
    pub fn new(items: Vec<&'a Item>, source_queues: Vec<usize>) -> Result<Self> {
        if items.len() != source_queues.len() {
            return Err(Error::shape("sub-list items and source queues differ in length"));
        }
        let mut seen = BTreeSet::new();
        for item in &items {
            if !seen.insert(item.id) {
                return Err(Error::invalid(format!("duplicate item id {} in sub-list", item.id)));
            }
        }
        Ok(Self { items, source_queues })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn ids(&self) -> Vec<u64> {
        self.items.iter().map(|i| i.id).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let cfg = EngineConfig::default();
        assert_eq!(cfg.validate(), Ok(()));
        assert_eq!(cfg.queue_specs.len(), 3);
        assert_eq!(cfg.d_input(), 22);
    }

    #[test]
    fn output_longer_than_pool_is_rejected() {
        let cfg = EngineConfig { l_s: 5, l_o: 10, max_count: 5, ..Default::default() };
        let err = cfg.validate().unwrap_err();
        assert_eq!(err, ConfigError::OutputExceedsPool);
        assert_eq!(alloc::string::ToString::to_string(&err), "l_o exceeds l_s");
    }

    #[test]
    fn head_split_is_checked() {
        let cfg = EngineConfig { d_model: 10, n_heads: 3, ..Default::default() };
        let err = cfg.validate().unwrap_err();
        assert_eq!(alloc::string::ToString::to_string(&err), "d_model not divisible by n_heads");
    }

    #[test]
    fn threshold_count_and_queues_are_checked() {
        let cfg = EngineConfig { max_count: 11, ..Default::default() };
        assert_eq!(cfg.validate(), Err(ConfigError::MaxCountExceedsOutput));
        let cfg = EngineConfig { queue_specs: Vec::new(), template: Vec::new(), ..Default::default() };
        assert_eq!(cfg.validate(), Err(ConfigError::NoQueues));
        let mut specs = default_queue_specs();
        specs[1].priority = 0;
        let cfg = EngineConfig { queue_specs: specs, ..Default::default() };
        assert_eq!(cfg.validate(), Err(ConfigError::DuplicatePriority(0)));
        let cfg = EngineConfig { d_score: 3, ..Default::default() };
        assert!(matches!(cfg.validate(), Err(ConfigError::Dimension(_))));
    }

    #[test]
    fn item_invariants() {
        let mut item = Item {
            id: 1,
            embedding: vec![0.6, 0.8],
            price: 3.0,
            prior_ctr: 0.2,
            prior_cvr: 0.1,
            category: 0,
        };
        assert!(item.validate(2).is_ok());
        assert!(item.validate(3).is_err());
        item.embedding = vec![1.0, 1.0];
        assert!(item.validate(2).is_err());
        item.embedding = vec![1.0, 0.0];
        item.prior_ctr = 1.5;
        assert!(item.validate(2).is_err());
    }

    #[test]
    fn sublist_rejects_duplicates() {
        let a = Item { id: 3, embedding: vec![1.0], price: 0.0, prior_ctr: 0.0, prior_cvr: 0.0, category: 0 };
        assert!(SubList::new(vec![&a, &a], vec![0, 0]).is_err());
        assert_eq!(SubList::new(vec![&a], vec![1]).unwrap().ids(), vec![3]);
    }
}
