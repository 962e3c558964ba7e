//! Command line interface: `simulate`, `oracle-check`, `schedule`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use pscd_core::policy::{detection_schedule, DecisionTrace};

use crate::config::{ConfigFile, Overrides};
use crate::harness::{run_experiment, run_replication};
use crate::{report, suites, trace};

// ---------------------------------------------------------------------------
// Argument shape
// ---------------------------------------------------------------------------

/// Top-level parser for the `pscd` binary.
#[derive(Debug, Parser)]
#[command(
    name = "pscd",
    version,
    about = "Risk-controlled parallel sequential change detection"
)]
pub struct Cli {
    /// Subcommand to run.
    #[command(subcommand)]
    pub command: Command,
}

/// The three subcommands.
#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a Monte Carlo experiment from a config file and write CSV reports.
    ///
    /// `PSCD_THREADS` caps the replication worker count.
    Simulate(SimulateArgs),
    /// Re-run the brute-force validation suites and print one line per
    /// invariant; exits nonzero if any fails.
    OracleCheck {
        /// One of: all, posterior, selection, glfwer, counterexample.
        #[arg(default_value = "all")]
        suite: String,
    },
    /// Print the declaration schedule stored in a serialized trace: one line
    /// per declaration time, tab-separated from the declared stream ids.
    Schedule {
        /// Trace JSON file written by `simulate --trace-out`.
        trace: PathBuf,
    },
}

/// Flags of the `simulate` subcommand.
#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Experiment config file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Override run.replications.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Override run.seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override report.out_dir.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override policy.rule (general | simplified).
    #[arg(long)]
    pub rule: Option<String>,
    /// Override run.K.
    #[arg(long)]
    pub k: Option<usize>,
    /// Also write replication 0's decision trace to this JSON file.
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

/// Run a parsed command line to completion.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::OracleCheck { suite } => cmd_oracle_check(&suite),
        Command::Schedule { trace } => cmd_schedule(&trace),
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let mut file = ConfigFile::load(&args.config)?;
    file.apply(&Overrides {
        reps: args.reps,
        seed: args.seed,
        out: args.out,
        rule: args.rule,
        k: args.k,
    })?;
    let out_dir = file
        .out_dir()
        .context("no output directory: set report.out_dir or pass --out")?
        .to_path_buf();
    let cfg = file.experiment()?;
    if !cfg.pair.is_admissible() {
        eprintln!(
            "warning: {} / {} is not one of the pairs the sorted-prefix rule is exact for",
            cfg.pair.risk, cfg.pair.utility
        );
    }
    let report = run_experiment(&cfg)?;
    let paths = report::write_reports(&out_dir, &report)?;
    for path in &paths {
        println!("wrote {}", path.display());
    }
    if let Some(path) = &args.trace_out {
        let trace = run_replication(&cfg, 0)?;
        trace::write_trace(path, &trace)?;
        println!("wrote {}", path.display());
    }
    println!(
        "{}: afdr {:.4} (se {:.4}), tadd {:.1} (se {:.1}), tarl {:.1} (se {:.1}), gfwer {:.4} (se {:.4}), {} replications",
        file.name(),
        report.afdr.0,
        report.afdr.1,
        report.tadd.0,
        report.tadd.1,
        report.tarl.0,
        report.tarl.1,
        report.gfwer.0,
        report.gfwer.1,
        report.replications,
    );
    Ok(())
}

fn cmd_oracle_check(which: &str) -> Result<()> {
    let outcomes = suites::run_suites(which)?;
    let mut failed = 0usize;
    for outcome in &outcomes {
        for check in &outcome.checks {
            let verdict = if check.ok { "pass" } else { "FAIL" };
            println!("[{verdict}] {}: {}", outcome.suite, check.label);
            if !check.ok {
                failed += 1;
            }
        }
    }
    if failed > 0 {
        bail!("{failed} oracle check(s) failed");
    }
    Ok(())
}

fn cmd_schedule(path: &Path) -> Result<()> {
    let trace = trace::read_trace(path)?;
    print!("{}", render_schedule(&trace));
    Ok(())
}

/// Text form of a trace's declaration schedule: one `time<TAB>ids` line per
/// declaration, ids comma-separated ascending; empty when nothing was
/// declared.
#[must_use]
pub fn render_schedule(trace: &DecisionTrace) -> String {
    let mut out = String::new();
    for (t, ids) in detection_schedule(trace) {
        let ids = ids
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(",");
        out.push_str(&format!("{t}\t{ids}\n"));
    }
    out
}
