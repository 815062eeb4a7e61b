use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use sortgen::commands::{cmd_bench, cmd_evaluate, cmd_oracle, cmd_rerank, cmd_simulate, cmd_train, open_checkpoint};
use sortgen::config::{load, LoadedConfig};
use sortgen::evaluate::OBJECTIVES;
use sortgen::rerank::render_response;
use sortgen_core::LossMode;

#[derive(Parser)]
#[command(name = "sortgen", version, about = "Ordered-regression slate re-ranking")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    OrderedRegression,
    Pointwise,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a catalog, training sessions and evaluation pools.
    Simulate {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a simulated dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        /// Metrics file (default: <ckpt>.metrics.tsv).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        loss_mode: Option<LossArg>,
    },
    /// Rerank the candidates of one request document.
    Rerank {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        request: PathBuf,
    },
    /// Write cumulative value curves for every method.
    Evaluate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare batched and per-candidate generation latency.
    Bench {
        #[arg(long)]
        ckpt: PathBuf,
        /// Per-slate trace records.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Greedy regret against exhaustive search on small pools.
    Oracle {
        #[arg(long)]
        ckpt: PathBuf,
    },
    /// Serve POST /rerank and GET /healthz.
    Serve {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

fn run(cli: Cli) -> Result<()> {
    let LoadedConfig { mut app, engine_given } = load(cli.config.as_deref(), cli.seed)?;
    let expected = engine_given.then(|| app.engine.clone());
    match cli.command {
        Command::Simulate { out } => println!("{}", cmd_simulate(&app, &out)?),
        Command::Train { data, ckpt, out, loss_mode } => {
            if let Some(m) = loss_mode {
                app.train.loss_mode = match m {
                    LossArg::OrderedRegression => LossMode::OrderedRegression,
                    LossArg::Pointwise => LossMode::Pointwise,
                };
            }
            let outcome = cmd_train(&app, &data, &ckpt, out.as_deref())?;
            println!("{}", outcome.summary());
            println!("checkpoint {} ({:016x})", ckpt.display(), outcome.checkpoint.hash);
        }
        Command::Rerank { ckpt, request } => {
            let ckpt = open_checkpoint(&ckpt, expected.as_ref())?;
            println!("{}", render_response(&cmd_rerank(&ckpt, &request)?));
        }
        Command::Evaluate { ckpt, data, out } => {
            let ckpt = open_checkpoint(&ckpt, expected.as_ref())?;
            let curves = cmd_evaluate(&ckpt, &data, &out)?;
            for c in &curves {
                let ends: Vec<String> = OBJECTIVES
                    .iter()
                    .zip(&c.values)
                    .map(|(o, v)| format!("{o} {:.4}", v.last().copied().unwrap_or(0.0)))
                    .collect();
                println!("{:<18} {}", c.method.name(), ends.join("  "));
            }
            println!("table written to {}", out.display());
        }
        Command::Bench { ckpt, out } => {
            let ckpt = open_checkpoint(&ckpt, expected.as_ref())?;
            println!("{}", cmd_bench(&ckpt, &app, out.as_deref())?.render());
        }
        Command::Oracle { ckpt } => {
            let ckpt = open_checkpoint(&ckpt, expected.as_ref())?;
            println!("{}", cmd_oracle(&ckpt, &app)?.render());
        }
        Command::Serve { ckpt, port } => {
            tokio::runtime::Runtime::new()?.block_on(sortgen::serve::serve(ckpt, expected, port))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
