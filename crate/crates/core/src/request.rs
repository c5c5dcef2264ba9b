use serde::{Deserialize, Serialize};

use crate::catalog::ModelCatalog;
use crate::error::CoreError;

/// One queued inference request: a batch of images plus the throughput and
/// accuracy the caller needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceRequest {
    pub id: u64,
    /// Number of images in the batch.
    pub batch: u64,
    /// Required inferences per second.
    pub perf_req: f64,
    /// Required top-5 accuracy as a fraction.
    pub acc_req: f64,
}

impl InferenceRequest {
    pub fn new(id: u64, batch: u64, perf_req: f64, acc_req: f64) -> Result<Self, CoreError> {
        let r = Self { id, batch, perf_req, acc_req };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        if self.batch == 0 {
            return Err(CoreError::InvalidRequest(format!("request {}: empty batch", self.id)));
        }
        if !(self.perf_req.is_finite() && self.perf_req > 0.0) {
            return Err(CoreError::InvalidRequest(format!(
                "request {}: performance requirement {} must be positive",
                self.id, self.perf_req
            )));
        }
        if !(self.acc_req > 0.0 && self.acc_req <= 1.0) {
            return Err(CoreError::InvalidRequest(format!(
                "request {}: accuracy requirement {} outside (0, 1]",
                self.id, self.acc_req
            )));
        }
        Ok(())
    }

    /// Checks the accuracy requirement against what the catalog can deliver.
    pub fn validate_for(&self, catalog: &ModelCatalog) -> Result<(), CoreError> {
        self.validate()?;
        if self.acc_req > catalog.max_accuracy() {
            return Err(CoreError::InvalidRequest(format!(
                "request {}: accuracy requirement {} exceeds best model ({})",
                self.id,
                self.acc_req,
                catalog.max_accuracy()
            )));
        }
        Ok(())
    }

    /// Same requirements applied to a different number of images.
    pub fn with_batch(&self, batch: u64) -> Self {
        Self { batch, ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::default_catalog;

    #[test]
    fn validation() {
        assert!(InferenceRequest::new(1, 100, 10.0, 0.9).is_ok());
        assert!(InferenceRequest::new(1, 0, 10.0, 0.9).is_err());
        assert!(InferenceRequest::new(1, 10, 0.0, 0.9).is_err());
        assert!(InferenceRequest::new(1, 10, f64::NAN, 0.9).is_err());
        assert!(InferenceRequest::new(1, 10, 1.0, 0.0).is_err());
        assert!(InferenceRequest::new(1, 10, 1.0, 1.2).is_err());
        let r = InferenceRequest::new(1, 10, 1.0, 0.95).unwrap();
        assert!(r.validate_for(&default_catalog()).is_err());
    }
}
