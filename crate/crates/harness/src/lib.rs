//! Scenario runner for the edgesplit cluster: loads TOML scenarios, stands
//! up a gateway with simulated workers per strategy, replays the request
//! queue and scripted disconnections, and reports violation metrics.

pub mod cluster;
pub mod metrics;
pub mod oracle_check;
pub mod report;
pub mod scenario;

pub use cluster::{run_strategy, RunError, RunOptions, Transition, WorkerSpec};
pub use report::{csv_string, emit_csv, emit_summary, Report, StrategyRun, StrategySummary};
pub use scenario::{Disconnect, Mode, Scenario, ScenarioError};

/// Runs every strategy of the scenario on its own cluster.
pub fn run_scenario(scenario: &Scenario, opts: &RunOptions) -> Result<Report, RunError> {
    run_scenario_traced(scenario, opts, &mut |_| {})
}

pub fn run_scenario_traced(
    scenario: &Scenario,
    opts: &RunOptions,
    trace: &mut dyn FnMut(&Transition),
) -> Result<Report, RunError> {
    let mut runs = Vec::with_capacity(scenario.strategies.len());
    for &strategy in &scenario.strategies {
        let outcomes = run_strategy(scenario, strategy, opts, trace)?;
        runs.push(StrategyRun { strategy, outcomes });
    }
    Report::new(scenario.name.clone(), &scenario.requests, runs)
        .map_err(|e| RunError::Runtime(e.to_string()))
}
