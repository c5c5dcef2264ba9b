use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use edgesplit_core::policy::Strategy;
use edgesplit_harness::oracle_check::{run_oracle_check, OracleCheckConfig, MAX_LEVELS, MAX_NODES};
use edgesplit_harness::{
    csv_string, emit_csv, emit_summary, run_scenario, run_strategy, Mode, RunError, RunOptions, Scenario,
};

const EXIT_FAILURE: u8 = 1;
const EXIT_SETUP: u8 = 3;
const EXIT_RUNTIME: u8 = 4;

#[derive(Parser)]
#[command(name = "edgesplit", version, about = "Run workload distribution scenarios on a simulated edge cluster")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every strategy of a scenario and report per-request outcomes.
    Run {
        scenario: PathBuf,
        /// Override the scenario's worker transport.
        #[arg(long)]
        mode: Option<Mode>,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the CSV report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the scenario's time scale (0 runs unpaced).
        #[arg(long)]
        time_scale: Option<f64>,
    },
    /// Compare the dispatch policy with exhaustive search on random tables.
    OracleCheck {
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..=MAX_NODES as u64))]
        nodes: Option<u64>,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..=MAX_LEVELS as u64))]
        levels: Option<u64>,
        #[arg(long, default_value_t = 1000)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the gateway state machine transitions of a scenario run.
    FsmTrace {
        scenario: PathBuf,
        /// Trace only this strategy.
        #[arg(long)]
        strategy: Option<Strategy>,
        #[arg(long)]
        mode: Option<Mode>,
    },
}

fn load(path: &PathBuf, mode: Option<Mode>, seed: Option<u64>) -> Result<(Scenario, RunOptions), RunError> {
    let mut scenario = Scenario::load(path).map_err(|e| RunError::Setup(e.to_string()))?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    let mut opts = RunOptions::for_scenario(&scenario);
    if let Some(mode) = mode {
        opts.mode = mode;
    }
    Ok((scenario, opts))
}

fn exit_for(e: &RunError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if e.is_setup() { EXIT_SETUP } else { EXIT_RUNTIME })
}

fn run(path: PathBuf, mode: Option<Mode>, seed: Option<u64>, out: Option<PathBuf>, time_scale: Option<f64>) -> anyhow::Result<ExitCode> {
    let (scenario, mut opts) = match load(&path, mode, seed) {
        Ok(x) => x,
        Err(e) => return Ok(exit_for(&e)),
    };
    if let Some(t) = time_scale {
        opts.time_scale = t;
    }
    let report = match run_scenario(&scenario, &opts) {
        Ok(r) => r,
        Err(e) => return Ok(exit_for(&e)),
    };
    match out {
        Some(p) => {
            emit_csv(&report, &p).with_context(|| format!("writing {}", p.display()))?;
            print!("{}", emit_summary(&report));
        }
        None => {
            let _ = std::io::stdout().write_all(csv_string(&report).as_bytes());
            eprint!("{}", emit_summary(&report));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn oracle_check(nodes: Option<u64>, levels: Option<u64>, cases: usize, seed: u64) -> anyhow::Result<ExitCode> {
    let config = OracleCheckConfig {
        nodes: nodes.map(|n| n as usize),
        levels: levels.map(|m| m as usize),
        cases,
        seed,
    };
    let report = run_oracle_check(config)?;
    for m in &report.mismatches {
        println!("case {} (n={}, m={}): {}", m.case, m.nodes, m.levels, m.detail);
    }
    let pct = if report.cases == 0 { 100.0 } else { 100.0 * report.agreed as f64 / report.cases as f64 };
    println!(
        "{}/{} cases agree ({pct:.1}%) in {:.2?}",
        report.agreed, report.cases, report.elapsed
    );
    Ok(if report.all_agree() { ExitCode::SUCCESS } else { ExitCode::from(EXIT_FAILURE) })
}

fn fsm_trace(path: PathBuf, strategy: Option<Strategy>, mode: Option<Mode>) -> anyhow::Result<ExitCode> {
    let (scenario, opts) = match load(&path, mode, None) {
        Ok(x) => x,
        Err(e) => return Ok(exit_for(&e)),
    };
    let strategies = strategy.map_or_else(|| scenario.strategies.clone(), |s| vec![s]);
    // A closed pipe (e.g. `| head`) just drops the rest of the trace.
    let mut out = std::io::stdout().lock();
    for s in strategies {
        if let Err(e) = run_strategy(&scenario, s, &opts, &mut |t| {
            let _ = writeln!(out, "{t}");
        }) {
            return Ok(exit_for(&e));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { scenario, mode, seed, out, time_scale } => run(scenario, mode, seed, out, time_scale),
        Command::OracleCheck { nodes, levels, cases, seed } => oracle_check(nodes, levels, cases, seed),
        Command::FsmTrace { scenario, strategy, mode } => fsm_trace(scenario, strategy, mode),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
