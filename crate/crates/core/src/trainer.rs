//! Mini-batch training of the survival model on impression samples.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{LossMode, UserContext};
use crate::error::{Error, Result};
use crate::model::{Objective, SortModel, SurvivalPair};
use crate::nn::{adam_step, AdamState, ParamStore, Tensor};
use crate::simulator::ImpressionSample;
use crate::value::{expected_count, ordered_regression_terms, pointwise_terms};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub loss_mode: LossMode,
    /// Share of sessions held out for evaluation, chosen by user hash.
    pub eval_fraction: f64,
    pub seed: u64,
    /// Stop after this many epochs without an eval-loss improvement.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            epochs: 10,
            lr: 1e-3,
            loss_mode: LossMode::OrderedRegression,
            eval_fraction: 0.1,
            seed: 7,
            patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if !(self.eval_fraction > 0.0 && self.eval_fraction < 1.0) {
            return Err(Error::invalid("eval_fraction must lie strictly between 0 and 1"));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::invalid("lr must be a non-negative number"));
        }
        Ok(())
    }
}

/// Metrics recorded after each epoch.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub eval_loss: f64,
    pub calib_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainReport {
    pub loss_mode: LossMode,
    /// Eval metrics of the parameters training started from.
    pub initial: EvalMetrics,
    pub epochs: Vec<EpochMetrics>,
    /// Epoch whose parameters were kept (0 = the initial ones).
    pub best_epoch: usize,
    pub train_sessions: usize,
    pub eval_sessions: usize,
}

impl TrainReport {
    pub fn best_eval_loss(&self) -> f64 {
        self.epochs
            .iter()
            .find(|e| e.epoch == self.best_epoch)
            .map_or(self.initial.loss, |e| e.eval_loss)
    }
}

/// Loss and calibration of a model on a set of sessions.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalMetrics {
    /// Mean per-session loss.
    pub loss: f64,
    /// Per position `j`: mean predicted expected count and mean observed
    /// cumulative count, click then pay.
    pub calibration: Vec<[[f64; 2]; 2]>,
    /// Mean absolute gap over positions and objectives.
    pub calib_gap: f64,
}

impl EvalMetrics {
    /// Absolute gap at 1-based position `j`, averaged over the objectives.
    pub fn gap_at(&self, j: usize) -> f64 {
        let c = &self.calibration[j - 1];
        ((c[0][0] - c[0][1]).abs() + (c[1][0] - c[1][1]).abs()) / 2.0
    }
}

/// Stable 64-bit FNV-1a over the bit patterns of the user features.
pub fn user_hash(user: &UserContext) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in &user.features {
        for b in v.to_bits().to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// Splits sample indices into (train, eval) by user hash so identical users
/// always land on the same side.
pub fn split_by_user(samples: &[ImpressionSample], eval_fraction: f64) -> (Vec<usize>, Vec<usize>) {
    let cut = (eval_fraction * 10_000.0) as u64;
    (0..samples.len()).partition(|&i| user_hash(&samples[i].user) % 10_000 >= cut)
}

/// Loss of one sample and its gradient with respect to the head logits.
pub fn sample_loss(mode: LossMode, max_count: usize, out: &crate::model::SeqOutput, sample: &ImpressionSample) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let labels = &sample.labels;
    let l = labels.len();
    let t = out.survival.click.len();
    match mode {
        LossMode::OrderedRegression => {
            let (lc, gc) = ordered_regression_terms(&out.survival.click, &labels.cumulative(Objective::Click))?;
            let (lp, gp) = ordered_regression_terms(&out.survival.pay, &labels.cumulative(Objective::Pay))?;
            Ok((lc + lp, gc, gp))
        }
        LossMode::Pointwise => {
            // Each position's first threshold is read as that position's own action probability.
            let first = |logits: &[f64]| -> Vec<f64> { (0..l).map(|j| logits[j * max_count]).collect() };
            let denom = 2 * l;
            let (lc, dc) = pointwise_terms(&first(&out.click_logits), labels.clicks(), denom)?;
            let (lp, dp) = pointwise_terms(&first(&out.pay_logits), labels.pays(), denom)?;
            let spread = |d: Vec<f64>| {
                let mut g = vec![0.0; t * max_count];
                for (j, v) in d.into_iter().enumerate() {
                    g[j * max_count] = v;
                }
                g
            };
            Ok((lc + lp, spread(dc), spread(dp)))
        }
    }
}

fn prepare<'a>(model: &SortModel, params: &ParamStore, sample: &'a ImpressionSample) -> Result<crate::model::ModelInput> {
    if sample.items.is_empty() || sample.items.len() != sample.labels.len() {
        return Err(Error::shape("sample items and labels disagree"));
    }
    let refs: Vec<&crate::config::Item> = sample.items.iter().collect();
    model.assemble_input(params, &[(&refs, &sample.user)])
}

/// Adds the gradients of the summed loss over `batch` into `params` and
/// returns the loss sum.
pub fn accumulate_gradients(model: &SortModel, params: &mut ParamStore, batch: &[&ImpressionSample], mode: LossMode) -> Result<f64> {
    let m = model.config().max_count;
    let mut total = 0.0;
    for sample in batch {
        let input = prepare(model, params, sample)?;
        let (out, cache) = model.forward_train(params, &input)?.pop().expect("one sequence");
        let (loss, dc, dp) = sample_loss(mode, m, &out, sample)?;
        model.backward(params, &cache, &dc, &dp)?;
        total += loss;
    }
    Ok(total)
}

/// Computes summed loss and gradients for a batch; implementations may
/// split the work but must fill `params` grads exactly as
/// [`accumulate_gradients`] would up to summation order.
pub trait BatchRunner {
    fn run(&self, model: &SortModel, params: &mut ParamStore, batch: &[&ImpressionSample], mode: LossMode) -> Result<f64>;

    /// Survival predictions for each sample's exposed list.
    fn predict(&self, model: &SortModel, params: &ParamStore, samples: &[&ImpressionSample]) -> Result<Vec<SurvivalPair>> {
        samples
            .iter()
            .map(|s| {
                let input = prepare(model, params, s)?;
                Ok(model.forward(params, &input)?.pop().expect("one sequence"))
            })
            .collect()
    }
}

/// Runs everything on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl BatchRunner for Sequential {
    fn run(&self, model: &SortModel, params: &mut ParamStore, batch: &[&ImpressionSample], mode: LossMode) -> Result<f64> {
        accumulate_gradients(model, params, batch, mode)
    }
}

/// Eval loss and calibration from externally supplied survival matrices,
/// one per sample.
pub fn evaluate_predictions(samples: &[&ImpressionSample], predictions: &[SurvivalPair], mode: LossMode, max_count: usize) -> Result<EvalMetrics> {
    if samples.is_empty() {
        return Err(Error::invalid("empty evaluation split"));
    }
    if samples.len() != predictions.len() {
        return Err(Error::shape("one prediction per sample is required"));
    }
    let l_max = samples.iter().map(|s| s.labels.len()).max().unwrap_or(0);
    let mut sums = vec![[[0.0; 2]; 2]; l_max];
    let mut counts = vec![0usize; l_max];
    let mut loss = 0.0;
    for (s, p) in samples.iter().zip(predictions) {
        let l = s.labels.len();
        let out = crate::model::SeqOutput {
            click_logits: logits_of(&p.click, max_count),
            pay_logits: logits_of(&p.pay, max_count),
            survival: p.clone(),
        };
        loss += sample_loss(mode, max_count, &out, s)?.0;
        for (k, (obj, mat)) in [(Objective::Click, &p.click), (Objective::Pay, &p.pay)].into_iter().enumerate() {
            let cum = s.labels.cumulative(obj);
            for j in 1..=l {
                sums[j - 1][k][0] += expected_count(mat, j)?;
                sums[j - 1][k][1] += cum[j - 1] as f64;
            }
        }
        for c in &mut counts[..l] {
            *c += 1;
        }
    }
    let calibration: Vec<[[f64; 2]; 2]> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &n)| {
            let n = n as f64;
            [[s[0][0] / n, s[0][1] / n], [s[1][0] / n, s[1][1] / n]]
        })
        .collect();
    let calib_gap = calibration
        .iter()
        .map(|c| (c[0][0] - c[0][1]).abs() + (c[1][0] - c[1][1]).abs())
        .sum::<f64>()
        / (2 * l_max) as f64;
    Ok(EvalMetrics { loss: loss / samples.len() as f64, calibration, calib_gap })
}

/// Logits consistent with a survival matrix (`-inf` where it is exactly 0).
fn logits_of(m: &crate::model::SurvivalMatrix, max_count: usize) -> Vec<f64> {
    let mut out = vec![f64::NEG_INFINITY; m.len() * max_count];
    for j in 1..=m.len() {
        for i in 1..=m.max_count().min(max_count) {
            let p = m.get(i, j);
            out[(j - 1) * max_count + i - 1] = crate::math::ln(p) - crate::math::ln(1.0 - p);
        }
    }
    out
}

pub fn evaluate_model<R: BatchRunner + ?Sized>(
    model: &SortModel,
    params: &ParamStore,
    samples: &[&ImpressionSample],
    mode: LossMode,
    runner: &R,
) -> Result<EvalMetrics> {
    if samples.is_empty() {
        return Err(Error::invalid("empty evaluation split"));
    }
    let predictions = runner.predict(model, params, samples)?;
    evaluate_predictions(samples, &predictions, mode, model.config().max_count)
}

/// What the observer learns after each epoch.
#[derive(Debug)]
pub struct EpochEvent<'a> {
    pub metrics: &'a EpochMetrics,
    /// Whether this epoch set a new best eval loss.
    pub improved: bool,
    pub params: &'a ParamStore,
}

/// Trains `params` in place with Adam. On return `params` holds the
/// best-eval-loss parameters (possibly the initial ones).
pub fn train<R: BatchRunner + ?Sized>(
    model: &SortModel,
    params: &mut ParamStore,
    samples: &[ImpressionSample],
    config: &TrainConfig,
    runner: &R,
    observer: &mut dyn FnMut(EpochEvent<'_>) -> Result<()>,
) -> Result<TrainReport> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::invalid("empty training dataset"));
    }
    let (train_idx, eval_idx) = split_by_user(samples, config.eval_fraction);
    if train_idx.is_empty() || eval_idx.is_empty() {
        return Err(Error::invalid(format!(
            "split left {} train and {} eval sessions; both must be non-empty",
            train_idx.len(),
            eval_idx.len()
        )));
    }
    let eval: Vec<&ImpressionSample> = eval_idx.iter().map(|&i| &samples[i]).collect();
    let mode = config.loss_mode;
    let initial = evaluate_model(model, params, &eval, mode, runner)?;
    let mut best = (initial.loss, 0usize, params.clone());
    let mut adam = AdamState::new(params, config.lr);
    let mut order = train_idx.clone();
    let mut epochs = Vec::with_capacity(config.epochs);
    params.zero_grad();
    for epoch in 1..=config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&ImpressionSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let loss = runner.run(model, params, &batch, mode)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss {loss} at epoch {epoch}, batch {b}; parameter norm {}",
                    params.param_norm()
                )));
            }
            loss_sum += loss;
            params.scale_grads(1.0 / batch.len() as f64);
            adam_step(params, &mut adam)?;
        }
        let ev = evaluate_model(model, params, &eval, mode, runner)?;
        let metrics = EpochMetrics {
            epoch,
            train_loss: loss_sum / order.len() as f64,
            eval_loss: ev.loss,
            calib_gap: ev.calib_gap,
        };
        let improved = metrics.eval_loss < best.0;
        if improved {
            best = (metrics.eval_loss, epoch, params.clone());
        }
        observer(EpochEvent { metrics: &metrics, improved, params })?;
        epochs.push(metrics);
        if config.patience.is_some_and(|p| epoch - best.1 >= p) {
            break;
        }
    }
    let (_, best_epoch, best_params) = best;
    copy_values(params, &best_params);
    Ok(TrainReport {
        loss_mode: mode,
        initial,
        epochs,
        best_epoch,
        train_sessions: train_idx.len(),
        eval_sessions: eval_idx.len(),
    })
}

fn copy_values(dst: &mut ParamStore, src: &ParamStore) {
    for (d, s) in dst.values_mut().iter_mut().zip(src.values()) {
        d.data_mut().copy_from_slice(s.data());
    }
}

/// Element-wise sum of gradient sets, used by runners that split batches.
pub fn add_grads(dst: &mut [Tensor], src: &[Tensor]) {
    for (d, s) in dst.iter_mut().zip(src) {
        d.data_mut().iter_mut().zip(s.data()).for_each(|(a, b)| *a += b);
    }
}
