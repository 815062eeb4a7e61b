//! Sequential ordered-regression transformer and mask-driven slate generation.
//!
//! The crate is `no_std` (with `alloc`) and contains every algorithmic piece of
//! the re-ranker: domain types and configuration, a small dense kernel with
//! hand-written reverse-mode rules, the causal transformer that emits survival
//! matrices, the list value calculus and losses, queue partitioning plus greedy
//! generation with windowed MMR, a synthetic behaviour simulator and the
//! training loop. IO, timing, the CLI and the HTTP service live in the
//! `sortgen` crate.

#![no_std]
#![warn(missing_debug_implementations, rust_2018_idioms)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod config;
pub mod error;
pub mod generation;
pub mod math;
pub mod model;
pub mod nn;
pub mod simulator;
pub mod trainer;
pub mod value;

pub use config::{
    EngineConfig, HeadMode, Item, LossMode, ObjectiveWeights, PartitionStrategy, SubList,
    UserContext,
};
pub use error::{ConfigError, Error, Result};
pub use generation::{CandidateQueues, GenerationTrace, QueueSpec, ScoreTerms};
pub use model::{Objective, Scorer, SlateScorer, SortModel, SurvivalMatrix, SurvivalPair};
pub use value::{LabelVector, ListValue};
