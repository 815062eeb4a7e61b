//! The CLI subcommands as library functions.

use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use sortgen_core::simulator::simulate;

use crate::bench::{run_bench, BenchReport};
use crate::checkpoint::{self, Checkpoint};
use crate::config::AppConfig;
use crate::data::{read_dataset, write_dataset, write_jsonl, StoredDataset};
use crate::evaluate::{evaluate_curves, render_table, Curves, Method};
use crate::oracle::{run_oracle, OracleStudy};
use crate::rerank::{parse_request, rerank, RerankResponse};
use crate::train::{run_training, TrainOutcome};

/// Loads a checkpoint, checking it against `expected` when given.
pub fn open_checkpoint(path: &Path, expected: Option<&sortgen_core::EngineConfig>) -> Result<Checkpoint> {
    ensure!(path.exists(), "checkpoint {} does not exist", path.display());
    Ok(match expected {
        Some(cfg) => checkpoint::load_expecting(path, cfg)?,
        None => checkpoint::load(path)?,
    })
}

/// Simulates a dataset into `out`. Returns a summary of record counts.
pub fn cmd_simulate(app: &AppConfig, out: &Path) -> Result<String> {
    app.validate()?;
    let data = simulate(&app.sim)?;
    let summary = format!(
        "wrote {} catalog items, {} training sessions, {} evaluation pools to {}",
        data.catalog.len(),
        data.samples.len(),
        data.pools.len(),
        out.display()
    );
    write_dataset(out, &StoredDataset { sim: app.sim.clone(), data })?;
    Ok(summary)
}

/// Trains on `data/train.jsonl`, writing the checkpoint to `ckpt` and the
/// metrics file to `metrics` (default: `<ckpt>.metrics.tsv`).
pub fn cmd_train(app: &AppConfig, data: &Path, ckpt: &Path, metrics: Option<&Path>) -> Result<TrainOutcome> {
    app.validate()?;
    let stored = read_dataset(data)?;
    let e = &app.engine;
    ensure!(
        stored.sim.d_emb == e.d_emb && stored.sim.d_user == e.d_user,
        "dataset {} has d_emb {} and d_user {}, engine config expects {} and {}",
        data.display(),
        stored.sim.d_emb,
        stored.sim.d_user,
        e.d_emb,
        e.d_user
    );
    let default_metrics = {
        let mut p = ckpt.as_os_str().to_owned();
        p.push(".metrics.tsv");
        std::path::PathBuf::from(p)
    };
    run_training(e, &app.train, &stored.data.samples, ckpt, metrics.unwrap_or(&default_metrics))
}

pub fn cmd_rerank(ckpt: &Checkpoint, request_file: &Path) -> Result<RerankResponse> {
    let text = fs::read_to_string(request_file).with_context(|| format!("reading {}", request_file.display()))?;
    let req = parse_request(&text).with_context(|| format!("request {}", request_file.display()))?;
    Ok(rerank(ckpt, &req)?)
}

/// Computes the value curves on the dataset's held-out pools and writes the table to `out`.
pub fn cmd_evaluate(ckpt: &Checkpoint, data: &Path, out: &Path) -> Result<Vec<Curves>> {
    let stored = read_dataset(data)?;
    let curves = evaluate_curves(&ckpt.model, &ckpt.params, &stored.data.pools, &stored.sim.ground_truth, &Method::ALL)?;
    fs::write(out, render_table(&curves)).with_context(|| format!("writing {}", out.display()))?;
    Ok(curves)
}

/// Runs the benchmark, writing per-slate trace records to `traces` when given.
pub fn cmd_bench(ckpt: &Checkpoint, app: &AppConfig, traces: Option<&Path>) -> Result<BenchReport> {
    let report = run_bench(ckpt, &app.sim, &app.bench, traces.is_some())?;
    if let Some(path) = traces {
        write_jsonl(path, &report.traces)?;
    }
    Ok(report)
}

pub fn cmd_oracle(ckpt: &Checkpoint, app: &AppConfig) -> Result<OracleStudy> {
    let study = run_oracle(ckpt, &app.sim, &app.oracle)?;
    if !study.passed() {
        bail!("oracle study failed\n{}", study.render());
    }
    Ok(study)
}
