//! Simulated inference executor and the worker runtime around it.

mod executor;
mod worker;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use executor::{profile_self, run_inference, ImageStream, InferenceRun, CALIBRATION_IMAGES};
pub use worker::{
    execute_paced, run_worker, Control, FailPlan, Pacer, PacedRun, WorkerConfig, WorkerError,
    WorkerExit,
};

use crate::NodeId;

pub const DEFAULT_NOISE_CV: f64 = 0.05;

fn default_noise_cv() -> f64 {
    DEFAULT_NOISE_CV
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid node profile `{node}`: {reason}")]
pub struct ProfileError {
    pub node: NodeId,
    pub reason: String,
}

/// Ground truth for one simulated node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeProfile {
    pub node_id: NodeId,
    /// True inferences per second at each approximation level.
    pub perf_per_level: Vec<f64>,
    /// Coefficient of variation of per-image latency.
    #[serde(default = "default_noise_cv")]
    pub noise_cv: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

impl NodeProfile {
    pub fn new(
        node_id: impl Into<NodeId>,
        perf_per_level: Vec<f64>,
        noise_cv: f64,
        rng_seed: u64,
    ) -> Result<Self, ProfileError> {
        let p = Self { node_id: node_id.into(), perf_per_level, noise_cv, rng_seed };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        let fail = |reason: String| Err(ProfileError { node: self.node_id.clone(), reason });
        if self.perf_per_level.is_empty() {
            return fail("no levels".into());
        }
        if let Some(v) = self.perf_per_level.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return fail(format!("throughput {v} must be positive"));
        }
        if self.perf_per_level.windows(2).any(|w| w[1] < w[0]) {
            return fail("throughput must not decrease with the level".into());
        }
        if !(self.noise_cv.is_finite() && self.noise_cv >= 0.0) {
            return fail(format!("noise_cv {} must be non-negative", self.noise_cv));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_validation() {
        assert!(NodeProfile::new("a", vec![1.0, 2.0], 0.05, 0).is_ok());
        assert!(NodeProfile::new("a", vec![], 0.05, 0).is_err());
        assert!(NodeProfile::new("a", vec![2.0, 1.0], 0.05, 0).is_err());
        assert!(NodeProfile::new("a", vec![0.0], 0.05, 0).is_err());
        assert!(NodeProfile::new("a", vec![1.0], -0.1, 0).is_err());
    }

    #[test]
    fn noise_defaults_when_omitted() {
        let p: NodeProfile =
            serde_json::from_str(r#"{"node_id":"a","perf_per_level":[1.0]}"#).unwrap();
        assert_eq!(p.noise_cv, DEFAULT_NOISE_CV);
    }
}
