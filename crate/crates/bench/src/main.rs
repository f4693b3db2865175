use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gpoo_bench::report::{emit, emit_step_logs, emit_sweep, Format};
use gpoo_bench::{run_diagnostics, run_experiment, sweep_sk, AlgoSpec, ConfigError, ExperimentConfig, RunError};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DIAGNOSTIC: u8 = 3;

#[derive(Parser)]
#[command(name = "bench", version, about = "Run GPOO and baseline experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured algorithm for every trial and write regret traces.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to the `out` key of the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Replaces the configured algorithm list; repeatable (`gpoo:10`, `stooo`, ...).
        #[arg(long = "algo")]
        algos: Vec<String>,
        /// Also write every round's step log to `trace.jsonl`.
        #[arg(long)]
        trace: bool,
        #[arg(long, value_enum, default_value = "both")]
        format: Format,
    },
    /// Run GPOO over a grid of representative-point counts and branching factors.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        s: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        k: Vec<usize>,
        /// Budgets to sweep; defaults to the configured budget.
        #[arg(long, value_delimiter = ',')]
        budgets: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the draw-count bound, the variance bound and concentration coverage.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
}

enum Failure {
    Config(String),
    Other(String),
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(c) => Failure::Config(c.to_string()),
            other => Failure::Other(other.to_string()),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn output_dir(flag: Option<PathBuf>, cfg: &ExperimentConfig) -> Result<PathBuf, Failure> {
    flag.or_else(|| cfg.out.clone())
        .ok_or_else(|| Failure::Config("no output directory: pass --out or set `out` in the config".into()))
}

fn execute(cmd: Command) -> Result<u8, Failure> {
    match cmd {
        Command::Run {
            config,
            out,
            trials,
            budget,
            seed,
            algos,
            trace,
            format,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if let Some(b) = budget {
                cfg.budget = b;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if !algos.is_empty() {
                cfg.algos = algos
                    .iter()
                    .map(|a| a.parse::<AlgoSpec>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| Failure::Config(format!("--algo: {e}")))?;
            }
            cfg.validate()?;
            let dir = output_dir(out, &cfg)?;
            let result = run_experiment(&cfg)?;
            let mut written = emit(&result, &dir, format).map_err(|e| Failure::Other(e.to_string()))?;
            if trace {
                written.push(emit_step_logs(&result, &dir).map_err(|e| Failure::Other(e.to_string()))?);
            }
            let final_round = cfg.budget;
            for a in &cfg.algos {
                let label = a.label(cfg.s);
                if let Some(m) = result.mean_at(&label, final_round) {
                    println!("{label}: mean regret after {final_round} rounds = {m:.6}");
                }
            }
            for p in written {
                println!("wrote {}", p.display());
            }
            Ok(0)
        }
        Command::Sweep {
            config,
            s,
            k,
            budgets,
            out,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = output_dir(out, &cfg)?;
            let budgets = if budgets.is_empty() { vec![cfg.budget] } else { budgets };
            let cells = sweep_sk(&cfg, &s, &k, &budgets)?;
            for c in &cells {
                println!(
                    "N={} S={} K={}: mean final regret {:.6}",
                    c.budget, c.s, c.k, c.mean_final
                );
            }
            for p in emit_sweep(&cells, &dir).map_err(|e| Failure::Other(e.to_string()))? {
                println!("wrote {}", p.display());
            }
            Ok(0)
        }
        Command::Check { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = run_diagnostics(&cfg)?;
            for line in report.lines() {
                println!("{line}");
            }
            Ok(if report.passed() { 0 } else { EXIT_DIAGNOSTIC })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
