//! Files, drivers and the service around `sortgen-core`: TOML configuration,
//! line-delimited JSON datasets, text checkpoints, the training driver,
//! evaluation curves, the latency benchmark, the oracle study and the rerank
//! endpoint. The `sortgen` binary exposes each as a subcommand.

pub mod bench;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod data;
pub mod evaluate;
pub mod oracle;
pub mod rerank;
pub mod serve;
pub mod train;
