//! Model catalog: the ordered set of pre-trained model variants a node can
//! switch between at run time.
//!
//! Level 0 is the least approximate (widest multiplier) model; every higher
//! level trades accuracy for throughput.

use serde::{Deserialize, Serialize};

use crate::error::CoreError;

/// Multiplier widths of the bundled MobileNetV2 variants, indexed by level.
pub const DEFAULT_ALPHAS: [f64; 6] = [1.4, 1.3, 1.0, 0.75, 0.5, 0.35];

/// Top-5 accuracy of the most accurate variant.
pub const TOP5_MOST_ACCURATE: f64 = 0.925;

/// Top-5 accuracy of the most approximate variant.
pub const TOP5_LEAST_ACCURATE: f64 = 0.829;

/// Top-5 accuracies by level. Only the two ends are measured values; the
/// four intermediate levels are linearly interpolated between them
/// (step 0.0192) and fixed here so nothing else hard-codes them.
pub const DEFAULT_TOP5: [f64; 6] = [0.925, 0.9058, 0.8866, 0.8674, 0.8482, 0.829];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelVariant {
    pub level: usize,
    /// Multiplier width of the network.
    pub alpha: f64,
    /// Expected top-5 accuracy as a fraction.
    pub top5_accuracy: f64,
}

/// Ordered list of model variants, level 0 first.
///
/// Accuracy and alpha are both strictly decreasing with the level index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ModelVariant>", into = "Vec<ModelVariant>")]
pub struct ModelCatalog {
    levels: Vec<ModelVariant>,
}

impl ModelCatalog {
    pub fn new(levels: Vec<ModelVariant>) -> Result<Self, CoreError> {
        if levels.is_empty() {
            return Err(CoreError::InvalidCatalog("catalog has no levels".into()));
        }
        for (i, v) in levels.iter().enumerate() {
            if v.level != i {
                return Err(CoreError::InvalidCatalog(format!(
                    "level indices must be contiguous from 0, found {} at position {i}",
                    v.level
                )));
            }
            if !(v.top5_accuracy > 0.0 && v.top5_accuracy <= 1.0) {
                return Err(CoreError::InvalidCatalog(format!(
                    "level {i} accuracy {} outside (0, 1]",
                    v.top5_accuracy
                )));
            }
            if !(v.alpha.is_finite() && v.alpha > 0.0) {
                return Err(CoreError::InvalidCatalog(format!(
                    "level {i} alpha {} must be positive",
                    v.alpha
                )));
            }
        }
        for pair in levels.windows(2) {
            if pair[1].top5_accuracy >= pair[0].top5_accuracy {
                return Err(CoreError::InvalidCatalog(format!(
                    "accuracy must strictly decrease with level ({} -> {})",
                    pair[0].level, pair[1].level
                )));
            }
            if pair[1].alpha >= pair[0].alpha {
                return Err(CoreError::InvalidCatalog(format!(
                    "alpha must strictly decrease with level ({} -> {})",
                    pair[0].level, pair[1].level
                )));
            }
        }
        Ok(Self { levels })
    }

    /// Builds a catalog from parallel accuracy/alpha lists.
    pub fn from_parts(accuracies: &[f64], alphas: &[f64]) -> Result<Self, CoreError> {
        if accuracies.len() != alphas.len() {
            return Err(CoreError::InvalidCatalog(format!(
                "{} accuracies but {} alphas",
                accuracies.len(),
                alphas.len()
            )));
        }
        Self::new(
            accuracies
                .iter()
                .zip(alphas)
                .enumerate()
                .map(|(level, (&top5_accuracy, &alpha))| ModelVariant {
                    level,
                    alpha,
                    top5_accuracy,
                })
                .collect(),
        )
    }

    /// Catalog truncated to its first `levels` variants.
    pub fn truncated(&self, levels: usize) -> Result<Self, CoreError> {
        Self::new(self.levels.iter().take(levels).cloned().collect())
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn levels(&self) -> &[ModelVariant] {
        &self.levels
    }

    pub fn deepest_level(&self) -> usize {
        self.levels.len() - 1
    }

    /// Top-5 accuracy of `level`. Panics on an out-of-range level.
    pub fn accuracy(&self, level: usize) -> f64 {
        self.levels[level].top5_accuracy
    }

    pub fn alpha(&self, level: usize) -> f64 {
        self.levels[level].alpha
    }

    pub fn max_accuracy(&self) -> f64 {
        self.levels[0].top5_accuracy
    }

    pub fn accuracies(&self) -> Vec<f64> {
        self.levels.iter().map(|v| v.top5_accuracy).collect()
    }
}

impl TryFrom<Vec<ModelVariant>> for ModelCatalog {
    type Error = CoreError;

    fn try_from(levels: Vec<ModelVariant>) -> Result<Self, Self::Error> {
        Self::new(levels)
    }
}

impl From<ModelCatalog> for Vec<ModelVariant> {
    fn from(c: ModelCatalog) -> Self {
        c.levels
    }
}

impl Default for ModelCatalog {
    fn default() -> Self {
        default_catalog()
    }
}

/// The six MobileNetV2 variants (alpha 1.4 down to 0.35).
pub fn default_catalog() -> ModelCatalog {
    ModelCatalog::from_parts(&DEFAULT_TOP5, &DEFAULT_ALPHAS).expect("bundled catalog is valid")
}
