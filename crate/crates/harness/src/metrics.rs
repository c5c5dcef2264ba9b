use edgesplit_core::{InferenceRequest, RequestOutcome};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("{outcomes} outcomes for {requests} requests")]
    LengthMismatch { outcomes: usize, requests: usize },
    #[error("outcome {index} is for request {got}, expected {expected}")]
    Misaligned { index: usize, got: u64, expected: u64 },
}

fn check_aligned(outcomes: &[RequestOutcome], requests: &[InferenceRequest]) -> Result<(), MetricsError> {
    if outcomes.len() != requests.len() {
        return Err(MetricsError::LengthMismatch { outcomes: outcomes.len(), requests: requests.len() });
    }
    for (index, (o, r)) in outcomes.iter().zip(requests).enumerate() {
        if o.request_id != r.id {
            return Err(MetricsError::Misaligned { index, got: o.request_id, expected: r.id });
        }
    }
    Ok(())
}

/// Share of execution time spent on requests that missed their throughput
/// and accuracy requirements, in percent. Each request is weighted by its
/// makespan.
pub fn violation_pct(
    outcomes: &[RequestOutcome],
    requests: &[InferenceRequest],
) -> Result<(f64, f64), MetricsError> {
    check_aligned(outcomes, requests)?;
    let total = outcomes.iter().fold(0.0, |acc, o| acc + o.makespan);
    if total <= 0.0 {
        return Ok((0.0, 0.0));
    }
    let share = |flag: fn(&RequestOutcome) -> bool| {
        100.0 * outcomes.iter().filter(|o| flag(o)).fold(0.0, |acc, o| acc + o.makespan) / total
    };
    Ok((share(|o| o.perf_violation), share(|o| o.acc_violation)))
}

/// Share of requests that missed each requirement, in percent.
pub fn violation_count_pct(
    outcomes: &[RequestOutcome],
    requests: &[InferenceRequest],
) -> Result<(f64, f64), MetricsError> {
    check_aligned(outcomes, requests)?;
    if outcomes.is_empty() {
        return Ok((0.0, 0.0));
    }
    let n = outcomes.len() as f64;
    let count = |flag: fn(&RequestOutcome) -> bool| 100.0 * outcomes.iter().filter(|o| flag(o)).count() as f64 / n;
    Ok((count(|o| o.perf_violation), count(|o| o.acc_violation)))
}
