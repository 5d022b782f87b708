use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use curriculum_core::harness::{emit_outputs, read_trace_csv, render_trace_svg, ExperimentPlan};
use curriculum_core::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "curriculum",
    version,
    about = "Curriculum learning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate, writing trace.csv, evals.csv, summary.json and curves.svg.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run only this seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        /// One thread per worker sharing a locked Q-table.
        #[arg(long)]
        threads: bool,
    },
    /// Check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Plot complexity per worker from a trace.csv.
    Plot {
        #[arg(long)]
        trace: PathBuf,
        /// Defaults to the trace path with an .svg extension.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            workers,
            threads,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.seeds = vec![seed];
            }
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            if let Some(workers) = workers {
                cfg.workers = workers;
            }
            cfg.threads |= threads;
            let plan = ExperimentPlan::new(&cfg)?;
            let result = plan.run()?;
            let dir = plan.config().output_dir.clone();
            emit_outputs(&result, &dir)?;
            match &result.summary.final_metric {
                Some(m) => println!(
                    "{}: {:.3} (95% CI {:.3} .. {:.3}, n={})",
                    result.summary.metric, m.mean, m.low, m.high, m.n
                ),
                None => println!("no evaluations recorded"),
            }
            println!("outputs written to {}", dir.display());
        }
        Command::Validate { config } => {
            ExperimentConfig::load(&config)?.resolved()?;
            println!("{}: ok", config.display());
        }
        Command::Plot { trace, out } => {
            let rows = read_trace_csv(&trace)?;
            let out = out.unwrap_or_else(|| trace.with_extension("svg"));
            fs::write(&out, render_trace_svg(&rows))
                .with_context(|| format!("writing {}", out.display()))?;
            println!("{}", out.display());
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
