//! Candidate queues, mask-driven greedy generation with windowed MMR, the
//! per-candidate reference generator, baselines and an exhaustive oracle.

mod oracle;
mod queues;
mod select;

pub use oracle::{arrangements, exhaustive_oracle, random_list_values, OracleResult, ORACLE_GUARD};
pub use queues::{build_queues, composite_score, ranking_top_queue_spec, CandidateQueues, QueueSpec, ScoreTerms};
pub use select::{
    generate, generate_iterative_reference, generate_template, mmr_score, similarity, CandidateRecord,
    GenerationTrace, SelectionParams, StepRecord,
};
