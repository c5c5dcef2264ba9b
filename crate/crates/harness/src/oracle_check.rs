//! Fuzzes the dispatch policy against the exhaustive oracle.

use std::time::{Duration, Instant};

use edgesplit_core::catalog::default_catalog;
use edgesplit_core::policy::{dispatch_proportional, oracle_exhaustive, PolicyError, PolicyInput};
use edgesplit_core::{InferenceRequest, NodeId, ProfilingTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MAX_NODES: usize = 4;
pub const MAX_LEVELS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleCheckConfig {
    /// Fixed cluster size, or every size in `1..=MAX_NODES` in turn.
    pub nodes: Option<usize>,
    /// Fixed level count, or every count in `1..=MAX_LEVELS` in turn.
    pub levels: Option<usize>,
    pub cases: usize,
    pub seed: u64,
}

impl Default for OracleCheckConfig {
    fn default() -> Self {
        Self { nodes: None, levels: None, cases: 1000, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub case: usize,
    pub nodes: usize,
    pub levels: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheckReport {
    pub cases: usize,
    pub agreed: usize,
    pub mismatches: Vec<Mismatch>,
    pub elapsed: Duration,
}

impl OracleCheckReport {
    pub fn all_agree(&self) -> bool {
        self.mismatches.is_empty() && self.agreed == self.cases
    }
}

/// A random instance: monotone columns on the 0.01 grid with small steps,
/// so ties are common; a requirement anywhere up to 120% of the cluster's
/// best total; an accuracy floor from just below the deepest level to the
/// top of the catalog.
pub fn generate_case(rng: &mut impl Rng, nodes: usize, levels: usize) -> PolicyInput {
    let columns = (0..nodes)
        .map(|i| {
            let mut cents = rng.random_range(1u32..2000);
            let col = (0..levels)
                .map(|l| {
                    if l > 0 {
                        cents += rng.random_range(0u32..600);
                    }
                    f64::from(cents) / 100.0
                })
                .collect();
            (NodeId::from(format!("n{i}")), col)
        })
        .collect();
    let catalog = default_catalog().truncated(levels).expect("levels within the catalog");
    let table = ProfilingTable::from_columns(columns, catalog).expect("monotone columns");
    let max_total = table.row_total(levels - 1);
    let perf_cents = rng.random_range(1..=((max_total * 120.0) as u64).max(2));
    let top = table.catalog().max_accuracy();
    let bottom = table.catalog().accuracy(levels - 1);
    let acc = rng.random_range(((bottom - 0.02) * 1e4) as u64..=(top * 1e4) as u64) as f64 / 1e4;
    let batch = rng.random_range(1u64..2000);
    let request = InferenceRequest::new(1, batch, perf_cents as f64 / 100.0, acc).expect("valid request");
    PolicyInput::new(table, request).expect("valid input")
}

/// Compares status, level vector and objective value on every case.
pub fn run_oracle_check(config: OracleCheckConfig) -> Result<OracleCheckReport, PolicyError> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut shapes = Vec::new();
    for n in config.nodes.map_or(1..=MAX_NODES, |n| n..=n) {
        for m in config.levels.map_or(1..=MAX_LEVELS, |m| m..=m) {
            shapes.push((n, m));
        }
    }
    let mut report = OracleCheckReport { cases: config.cases, agreed: 0, mismatches: Vec::new(), elapsed: Duration::ZERO };
    for case in 0..config.cases {
        let (n, m) = shapes[case % shapes.len()];
        let input = generate_case(&mut rng, n, m);
        let dp = dispatch_proportional(&input);
        let oracle = oracle_exhaustive(&input)?;
        let mut diffs = Vec::new();
        if dp.status != oracle.status {
            diffs.push(format!("status {:?} vs {:?}", dp.status, oracle.status));
        }
        if dp.levels() != oracle.levels() {
            diffs.push(format!("levels {:?} vs {:?}", dp.levels(), oracle.levels()));
        }
        if dp.score != oracle.score {
            diffs.push(format!("objective {:?} vs {:?}", dp.score, oracle.score));
        }
        if diffs.is_empty() {
            report.agreed += 1;
        } else {
            report.mismatches.push(Mismatch { case, nodes: n, levels: m, detail: diffs.join("; ") });
        }
    }
    report.elapsed = start.elapsed();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generated_cases_are_valid_and_seeded() {
        let mut a = ChaCha8Rng::seed_from_u64(4);
        let mut b = ChaCha8Rng::seed_from_u64(4);
        for (n, m) in [(1, 1), (4, 6), (2, 3)] {
            let x = generate_case(&mut a, n, m);
            assert_eq!((x.table().nodes(), x.table().levels()), (n, m));
            assert_eq!(x, generate_case(&mut b, n, m));
        }
    }

    #[test]
    fn small_check_agrees() {
        let r = run_oracle_check(OracleCheckConfig { cases: 48, ..Default::default() }).unwrap();
        assert!(r.all_agree(), "{:?}", r.mismatches);
        let r = run_oracle_check(OracleCheckConfig { nodes: Some(3), levels: Some(2), cases: 10, seed: 1 }).unwrap();
        assert_eq!(r.agreed, 10);
    }
}
