//! Rerank request and response documents.
//!
//! Request:
//!
//! ```json
//! {"user_features": [0.1, ...],
//!  "candidates": [{"id": 3, "emb": [...], "price": 4.2, "ctr": 0.1, "cvr": 0.3, "cat": 2}, ...],
//!  "weights": {"alpha": 5, "beta": 1, "gamma": 1},
//!  "lambda": 0.8}
//! ```
//!
//! `weights` and `lambda` are optional and default to the checkpoint's engine
//! config. A `"format": "sortgen-data-v1"` field is accepted. The response is
//! `{"format", "ids", "source_queues", "value": {"v_click", "v_pay", "v_gmv", "combined"}, "latency_ns"}`.

use std::collections::HashSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sortgen_core::generation::{build_queues, generate, SelectionParams};
use sortgen_core::{Item, ListValue, ObjectiveWeights, Scorer, UserContext};

use crate::checkpoint::Checkpoint;
use crate::data::{parse_document, ItemRecord, DATA_FORMAT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RerankRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
    pub user_features: Vec<f64>,
    pub candidates: Vec<ItemRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<ObjectiveWeights>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankResponse {
    pub format: String,
    pub ids: Vec<u64>,
    pub source_queues: Vec<usize>,
    pub value: ListValue,
    pub latency_ns: u64,
}

impl RerankResponse {
    /// The response with timing removed, for comparing outputs across paths.
    pub fn without_latency(&self) -> Self {
        Self { latency_ns: 0, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RequestError {
    #[error("malformed request: {0}")]
    Malformed(String),
    #[error("insufficient candidates: {got} given, {need} required")]
    InsufficientCandidates { got: usize, need: usize },
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("generation failed: {0}")]
    Internal(String),
}

pub fn parse_request(text: &str) -> Result<RerankRequest, RequestError> {
    parse_document(text).map_err(RequestError::Malformed)
}

/// Validates `req` against the checkpoint and generates one slate.
pub fn rerank(ckpt: &Checkpoint, req: &RerankRequest) -> Result<RerankResponse, RequestError> {
    let start = Instant::now();
    let cfg = ckpt.config();
    if let Some(f) = req.format.as_deref().filter(|f| *f != DATA_FORMAT) {
        return Err(RequestError::Invalid(format!("unsupported format `{f}`")));
    }
    if req.candidates.len() < cfg.l_o {
        return Err(RequestError::InsufficientCandidates { got: req.candidates.len(), need: cfg.l_o });
    }
    let invalid = |e: sortgen_core::Error| RequestError::Invalid(e.to_string());
    let user = UserContext::new(req.user_features.clone());
    user.validate(cfg.d_user).map_err(invalid)?;
    let pool: Vec<Item> = req.candidates.iter().cloned().map(Item::from).collect();
    let mut seen = HashSet::new();
    for item in &pool {
        item.validate(cfg.d_emb).map_err(invalid)?;
        if !seen.insert(item.id) {
            return Err(RequestError::Invalid(format!("duplicate candidate id {}", item.id)));
        }
    }
    let weights = req.weights.unwrap_or(cfg.weights);
    weights.validate().map_err(|e| RequestError::Invalid(e.to_string()))?;
    let lambda = req.lambda.unwrap_or(cfg.lambda_mmr);
    if !(0.0..=1.0).contains(&lambda) {
        return Err(RequestError::Invalid("lambda must lie in [0, 1]".into()));
    }

    let queues = build_queues(&pool, &cfg.queue_specs, cfg.partition_strategy, cfg.l_o).map_err(invalid)?;
    let params = SelectionParams { l_o: cfg.l_o, weights, lambda, window: cfg.window_w };
    let scorer = Scorer::new(&ckpt.model, &ckpt.params);
    let trace = generate(&pool, &user, &queues, &scorer, &params).map_err(|e| RequestError::Internal(e.to_string()))?;
    Ok(RerankResponse {
        format: DATA_FORMAT.into(),
        value: trace.final_value().unwrap_or_default(),
        ids: trace.item_ids,
        source_queues: trace.source_queues,
        latency_ns: u64::try_from(start.elapsed().as_nanos()).unwrap_or(u64::MAX),
    })
}

pub fn render_response(resp: &RerankResponse) -> String {
    serde_json::to_string(resp).expect("response serializes")
}
