use super::objective::{board_targets, QuantizedProblem, Score};
use super::{finish, PolicyError, PolicyInput, PolicyOutput};

/// Largest number of level vectors the oracle will enumerate.
pub const ORACLE_MAX_VECTORS: u128 = 10_000_000;

/// Brute-force reference for [`super::dispatch_proportional`].
///
/// Enumerates every level vector over the full, unpruned table and keeps the
/// best one under the shared objective. When none meets the requirement it
/// falls back to the all-deepest vector, as the policy does.
pub fn oracle_exhaustive(input: &PolicyInput) -> Result<PolicyOutput, PolicyError> {
    let table = input.table();
    let (m, n) = (table.levels(), table.nodes());
    let vectors = (m as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if vectors > ORACLE_MAX_VECTORS {
        return Err(PolicyError::OracleTooLarge { vectors, limit: ORACLE_MAX_VECTORS });
    }
    let perf_req = input.request().perf_req;
    let problem = QuantizedProblem::new(table, perf_req, &board_targets(table, perf_req));

    let mut best: Option<Score> = None;
    let mut levels = vec![0usize; n];
    for code in 0..vectors as u64 {
        // base-m digits of `code`, last node varying fastest
        let mut rest = code;
        for slot in levels.iter_mut().rev() {
            *slot = (rest % m as u64) as usize;
            rest /= m as u64;
        }
        let score = problem.score(&levels);
        if score.feasible && best.as_ref().is_none_or(|b| score.beats(b)) {
            best = Some(score);
        }
    }

    let deepest = m - 1;
    Ok(match best {
        Some(score) => {
            let perf: Vec<f64> = score
                .levels
                .iter()
                .enumerate()
                .map(|(node, &l)| table.perf(l, node))
                .collect();
            let predicted = perf.iter().sum();
            finish(input, score.levels.clone(), &perf, predicted, true, score.deepest_level)
        }
        None => {
            let perf = table.row(deepest).to_vec();
            let predicted = perf.iter().sum();
            finish(input, vec![deepest; n], &perf, predicted, false, deepest)
        }
    })
}
