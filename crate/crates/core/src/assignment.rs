use serde::{Deserialize, Serialize};

use crate::catalog::ModelCatalog;
use crate::error::CoreError;
use crate::NodeId;

/// One node's slice of a request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeShare {
    pub node_id: NodeId,
    pub images: u64,
    pub level: usize,
    /// Profiled throughput of the node at `level`.
    pub predicted_perf: f64,
}

/// Workload split and model selection for one request (or the remainder of
/// one, after a redistribution).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub shares: Vec<NodeShare>,
    /// Throughput the split is predicted to reach.
    pub predicted_throughput: f64,
    /// Expected batch accuracy: image-weighted mean of the selected models.
    pub predicted_accuracy: f64,
    pub feasible_perf: bool,
    pub feasible_acc: bool,
}

impl Assignment {
    pub fn total_images(&self) -> u64 {
        self.shares.iter().map(|s| s.images).sum()
    }

    pub fn levels(&self) -> Vec<usize> {
        self.shares.iter().map(|s| s.level).collect()
    }

    pub fn images(&self) -> Vec<u64> {
        self.shares.iter().map(|s| s.images).collect()
    }

    pub fn share(&self, node: &NodeId) -> Option<&NodeShare> {
        self.shares.iter().find(|s| &s.node_id == node)
    }

    /// Checks the share total and level range.
    pub fn validate(&self, batch: u64, catalog: &ModelCatalog) -> Result<(), CoreError> {
        let total = self.total_images();
        if total != batch {
            return Err(CoreError::InvalidAssignment(format!(
                "shares sum to {total}, batch is {batch}"
            )));
        }
        if let Some(s) = self.shares.iter().find(|s| s.level >= catalog.len()) {
            return Err(CoreError::InvalidAssignment(format!(
                "node `{}` assigned level {} of {}",
                s.node_id,
                s.level,
                catalog.len()
            )));
        }
        Ok(())
    }
}

/// Image-weighted mean accuracy of an assignment.
pub fn weighted_accuracy(assignment: &Assignment, catalog: &ModelCatalog) -> Result<f64, CoreError> {
    weighted_accuracy_of(
        assignment.shares.iter().map(|s| (s.images, s.level)),
        catalog,
    )
}

pub(crate) fn weighted_accuracy_of(
    shares: impl IntoIterator<Item = (u64, usize)>,
    catalog: &ModelCatalog,
) -> Result<f64, CoreError> {
    let mut total = 0u64;
    let mut acc = 0.0;
    for (images, level) in shares {
        if level >= catalog.len() {
            return Err(CoreError::InvalidAssignment(format!("level {level} out of range")));
        }
        total += images;
        acc += images as f64 * catalog.accuracy(level);
    }
    if total == 0 {
        return Err(CoreError::EmptyBatch);
    }
    Ok(acc / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{default_catalog, DEFAULT_TOP5};

    fn assignment(parts: &[(u64, usize)]) -> Assignment {
        Assignment {
            shares: parts
                .iter()
                .enumerate()
                .map(|(i, &(images, level))| NodeShare {
                    node_id: NodeId::from(format!("n{i}")),
                    images,
                    level,
                    predicted_perf: 1.0,
                })
                .collect(),
            predicted_throughput: 0.0,
            predicted_accuracy: 0.0,
            feasible_perf: true,
            feasible_acc: true,
        }
    }

    #[test]
    fn uniform_level_gives_that_level() {
        let c = default_catalog();
        let a = weighted_accuracy(&assignment(&[(13, 0), (7, 0), (80, 0)]), &c).unwrap();
        assert!((a - DEFAULT_TOP5[0]).abs() < 1e-12);
    }

    #[test]
    fn two_extremes_average() {
        let c = default_catalog();
        let a = weighted_accuracy(&assignment(&[(50, 0), (50, 5)]), &c).unwrap();
        assert!((a - 0.877).abs() < 1e-12);
    }

    #[test]
    fn eight_six_split() {
        let c = ModelCatalog::from_parts(&[0.92, 0.85], &[1.0, 0.5]).unwrap();
        let a = weighted_accuracy(&assignment(&[(8, 1), (6, 0)]), &c).unwrap();
        assert!((a - 0.88).abs() < 1e-12);
    }

    #[test]
    fn empty_batch_is_an_error() {
        let c = default_catalog();
        assert_eq!(
            weighted_accuracy(&assignment(&[(0, 0), (0, 3)]), &c),
            Err(CoreError::EmptyBatch)
        );
    }

    #[test]
    fn validate_checks_sum_and_levels() {
        let c = default_catalog();
        let a = assignment(&[(40, 0), (60, 1)]);
        assert!(a.validate(100, &c).is_ok());
        assert!(a.validate(99, &c).is_err());
        assert!(assignment(&[(1, 6)]).validate(1, &c).is_err());
    }
}
