//! Training driver: wall-clock timing, the per-epoch metrics file and
//! checkpointing at the best eval loss.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use sortgen_core::simulator::ImpressionSample;
use sortgen_core::trainer::{train, EpochEvent, Sequential, TrainConfig, TrainReport};
use sortgen_core::{EngineConfig, LossMode, SortModel};

use crate::checkpoint::{self, Checkpoint};

pub fn mode_label(mode: LossMode) -> &'static str {
    match mode {
        LossMode::OrderedRegression => "ordered_regression",
        LossMode::Pointwise => "pointwise",
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: TrainReport,
    /// Seconds since the start of training at the end of each epoch.
    pub seconds: Vec<f64>,
    pub checkpoint: Checkpoint,
}

impl TrainOutcome {
    pub fn summary(&self) -> String {
        let r = &self.report;
        let mut s = format!(
            "mode {}\ntrain sessions {}  eval sessions {}\ninitial eval loss {:.6}  calib gap {:.6}\n",
            mode_label(r.loss_mode),
            r.train_sessions,
            r.eval_sessions,
            r.initial.loss,
            r.initial.calib_gap
        );
        for (e, t) in r.epochs.iter().zip(&self.seconds) {
            s += &format!(
                "epoch {:>3}  train {:.6}  eval {:.6}  calib gap {:.6}  {:.1}s\n",
                e.epoch, e.train_loss, e.eval_loss, e.calib_gap, t
            );
        }
        s += &format!("best epoch {} (eval loss {:.6})", r.best_epoch, r.best_eval_loss());
        s
    }
}

/// Trains a fresh model and writes the checkpoint whenever eval loss improves.
///
/// The loss mode comes from `train_config` and is recorded in the checkpoint's
/// engine config. The metrics file gets one tab-separated line per epoch:
/// `epoch train_loss eval_loss calib_gap seconds`.
pub fn run_training(
    engine: &EngineConfig,
    train_config: &TrainConfig,
    samples: &[ImpressionSample],
    ckpt_path: &Path,
    metrics_path: &Path,
) -> Result<TrainOutcome> {
    let engine = EngineConfig { loss_mode: train_config.loss_mode, ..engine.clone() };
    let model = SortModel::new(&engine)?;
    let mut params = model.init_params(engine.seed);
    checkpoint::save(ckpt_path, &engine, &params)?;
    let metrics = File::create(metrics_path).with_context(|| format!("creating {}", metrics_path.display()))?;
    let mut metrics = BufWriter::new(metrics);

    let start = Instant::now();
    let mut seconds = Vec::new();
    let mut observe = |ev: EpochEvent<'_>| -> sortgen_core::Result<()> {
        let t = start.elapsed().as_secs_f64();
        seconds.push(t);
        let m = ev.metrics;
        let line = format!("{}\t{}\t{}\t{}\t{:.3}\n", m.epoch, m.train_loss, m.eval_loss, m.calib_gap, t);
        metrics
            .write_all(line.as_bytes())
            .and_then(|()| metrics.flush())
            .map_err(|e| sortgen_core::Error::Invalid(format!("metrics file: {e}")))?;
        if ev.improved {
            checkpoint::save(ckpt_path, &engine, ev.params)
                .map_err(|e| sortgen_core::Error::Invalid(format!("checkpoint: {e}")))?;
        }
        Ok(())
    };
    let report = train(&model, &mut params, samples, train_config, &Sequential, &mut observe)?;
    let checkpoint = Checkpoint::new(&engine, params)?;
    Ok(TrainOutcome { report, seconds, checkpoint })
}
