//! Latency and invocation benchmark: batched generation against the
//! per-candidate reference, with a simulated per-call overhead.

use std::cell::Cell;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use anyhow::{ensure, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sortgen_core::generation::{build_queues, generate, generate_iterative_reference, GenerationTrace, SelectionParams};
use sortgen_core::model::SurvivalPair;
use sortgen_core::simulator::{sample_catalog, sample_pool, sample_user, SimConfig};
use sortgen_core::{Item, Scorer, SlateScorer, UserContext};

use crate::checkpoint::Checkpoint;
use crate::config::BenchConfig;

/// Busy-waits so the cost is paid on this thread, like a blocking RPC.
pub fn spin(d: Duration) {
    let end = Instant::now() + d;
    while Instant::now() < end {
        std::hint::spin_loop();
    }
}

/// Charges `overhead` before every batch it forwards, and tallies the time spent.
struct Overhead<'a, S: ?Sized> {
    inner: &'a S,
    overhead: Duration,
    spent: Cell<Duration>,
}

impl<S: SlateScorer + ?Sized> SlateScorer for Overhead<'_, S> {
    fn score_batch(&self, user: &UserContext, lists: &[&[&Item]]) -> sortgen_core::Result<Vec<SurvivalPair>> {
        let t = Instant::now();
        spin(self.overhead);
        self.spent.set(self.spent.get() + t.elapsed());
        self.inner.score_batch(user, lists)
    }
}

/// One generated slate as written to the optional trace file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub method: &'static str,
    pub slate: usize,
    pub item_ids: Vec<u64>,
    pub source_queues: Vec<usize>,
    /// Combined list value after each step.
    pub step_values: Vec<f64>,
    pub invocations: usize,
    pub wall_ns: u64,
}

impl TraceRecord {
    fn new(method: &'static str, slate: usize, t: &GenerationTrace, wall: Duration) -> Self {
        let step_values = t
            .steps
            .iter()
            .map(|s| {
                s.candidates
                    .iter()
                    .find(|c| c.queue == s.chosen_queue)
                    .map_or(f64::NAN, |c| c.value.combined)
            })
            .collect();
        Self {
            method,
            slate,
            item_ids: t.item_ids.clone(),
            source_queues: t.source_queues.clone(),
            step_values,
            invocations: t.invocations,
            wall_ns: wall.as_nanos() as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodStats {
    pub wall_ns: Vec<u64>,
    pub invocations: Vec<usize>,
    /// Configured overhead times invocations.
    pub overhead: Duration,
    /// Time actually spent spinning, which overshoots `overhead` slightly.
    pub spun: Duration,
}

impl MethodStats {
    fn new() -> Self {
        Self { wall_ns: Vec::new(), invocations: Vec::new(), overhead: Duration::ZERO, spun: Duration::ZERO }
    }

    fn quantile(&self, q: f64) -> u64 {
        let mut v = self.wall_ns.clone();
        v.sort_unstable();
        let k = ((v.len() as f64 - 1.0) * q).round() as usize;
        v[k]
    }

    pub fn median_ns(&self) -> u64 {
        self.quantile(0.5)
    }

    pub fn p99_ns(&self) -> u64 {
        self.quantile(0.99)
    }

    pub fn max_invocations(&self) -> usize {
        self.invocations.iter().copied().max().unwrap_or(0)
    }

    pub fn min_invocations(&self) -> usize {
        self.invocations.iter().copied().min().unwrap_or(0)
    }

    pub fn overhead_per_slate(&self) -> Duration {
        self.overhead / self.wall_ns.len().max(1) as u32
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub slates: usize,
    pub q: usize,
    pub l_o: usize,
    pub overhead: Duration,
    pub generate: MethodStats,
    pub reference: MethodStats,
    /// Slates where the two generators disagreed.
    pub mismatches: usize,
    pub traces: Vec<TraceRecord>,
}

impl BenchReport {
    /// Charged overhead of the reference over that of `generate`.
    pub fn overhead_ratio(&self) -> f64 {
        self.reference.overhead.as_secs_f64() / self.generate.overhead.as_secs_f64()
    }

    pub fn wall_ratio(&self) -> f64 {
        self.reference.median_ns() as f64 / self.generate.median_ns() as f64
    }

    pub fn render(&self) -> String {
        let ms = |ns: u64| ns as f64 / 1e6;
        let mut s = format!(
            "slates {}  queues {}  l_o {}  overhead per call {} us\n",
            self.slates,
            self.q,
            self.l_o,
            self.overhead.as_micros()
        );
        for (name, m) in [("generate", &self.generate), ("reference", &self.reference)] {
            let _ = writeln!(
                s,
                "{name:<10} invocations/slate {}..{}  median {:.3} ms  p99 {:.3} ms  overhead/slate {:.3} ms (spun {:.3} ms)",
                m.min_invocations(),
                m.max_invocations(),
                ms(m.median_ns()),
                ms(m.p99_ns()),
                m.overhead_per_slate().as_secs_f64() * 1e3,
                m.spun.as_secs_f64() * 1e3 / m.wall_ns.len().max(1) as f64
            );
        }
        let _ = writeln!(s, "mismatched slates {}", self.mismatches);
        let _ = write!(
            s,
            "ratio reference/generate: overhead {:.2}x  median wall-clock {:.2}x",
            self.overhead_ratio(),
            self.wall_ratio()
        );
        s
    }
}

/// Generates `config.slates` slates on simulator pools with both generators.
/// Parameters are only read.
pub fn run_bench(ckpt: &Checkpoint, sim: &SimConfig, config: &BenchConfig, keep_traces: bool) -> Result<BenchReport> {
    ensure!(config.slates > 0, "bench needs at least one slate");
    let cfg = ckpt.config();
    let sim = SimConfig { l_s: cfg.l_s, l_o: cfg.l_o, d_emb: cfg.d_emb, d_user: cfg.d_user, ..sim.clone() };
    let catalog = sample_catalog(&sim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let scorer = Scorer::new(&ckpt.model, &ckpt.params);
    let overhead = Duration::from_micros(config.overhead_us);
    let params = SelectionParams { l_o: cfg.l_o, weights: cfg.weights, lambda: cfg.lambda_mmr, window: cfg.window_w };
    let mut report = BenchReport {
        slates: config.slates,
        q: cfg.queue_specs.len(),
        l_o: cfg.l_o,
        overhead,
        generate: MethodStats::new(),
        reference: MethodStats::new(),
        mismatches: 0,
        traces: Vec::new(),
    };
    for slate in 0..config.slates {
        let user = sample_user(&catalog, &sim, &mut rng);
        let pool = sample_pool(&catalog, cfg.l_s, &mut rng);
        let queues = build_queues(&pool, &cfg.queue_specs, cfg.partition_strategy, cfg.l_o)?;

        let charged = Overhead { inner: &scorer, overhead, spent: Cell::new(Duration::ZERO) };
        let t = Instant::now();
        let fast = generate(&pool, &user.context, &queues, &charged, &params)?;
        let fast_wall = t.elapsed();

        let mut spent = Duration::ZERO;
        let t = Instant::now();
        let slow = generate_iterative_reference(&pool, &user.context, &queues, &scorer, &params, &mut || {
            let s = Instant::now();
            spin(overhead);
            spent += s.elapsed();
        })?;
        let slow_wall = t.elapsed();

        for (m, trace, wall, over) in [
            (&mut report.generate, &fast, fast_wall, charged.spent.get()),
            (&mut report.reference, &slow, slow_wall, spent),
        ] {
            m.wall_ns.push(wall.as_nanos() as u64);
            m.invocations.push(trace.invocations);
            m.overhead += overhead * trace.invocations as u32;
            m.spun += over;
        }
        if !fast.same_selection(&slow) {
            report.mismatches += 1;
        }
        if keep_traces {
            report.traces.push(TraceRecord::new("generate", slate, &fast, fast_wall));
            report.traces.push(TraceRecord::new("reference", slate, &slow, slow_wall));
        }
    }
    Ok(report)
}
