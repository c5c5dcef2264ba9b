//! Per-node throughput at every approximation level.

use serde::{Deserialize, Serialize};

use crate::catalog::ModelCatalog;
use crate::error::CoreError;
use crate::NodeId;

/// `m x n` matrix of inferences/sec: one row per catalog level, one column
/// per node.
///
/// Columns are non-decreasing down the rows (more approximation never slows
/// a node down); construction rejects anything else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilingTable {
    node_ids: Vec<NodeId>,
    /// Row-major, `perf[level][node]`.
    perf: Vec<Vec<f64>>,
    catalog: ModelCatalog,
}

impl ProfilingTable {
    pub fn new(
        node_ids: Vec<NodeId>,
        perf: Vec<Vec<f64>>,
        catalog: ModelCatalog,
    ) -> Result<Self, CoreError> {
        if perf.len() != catalog.len() {
            return Err(CoreError::InvalidTable(format!(
                "{} rows for a catalog of {} levels",
                perf.len(),
                catalog.len()
            )));
        }
        let n = node_ids.len();
        for (j, row) in perf.iter().enumerate() {
            if row.len() != n {
                return Err(CoreError::InvalidTable(format!(
                    "row {j} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (i, &p) in row.iter().enumerate() {
                if !p.is_finite() || p <= 0.0 {
                    return Err(CoreError::InvalidTable(format!(
                        "entry [{j}][{i}] = {p} must be finite and positive"
                    )));
                }
            }
        }
        for j in 1..perf.len() {
            for i in 0..n {
                if perf[j][i] < perf[j - 1][i] {
                    return Err(CoreError::InvalidTable(format!(
                        "column {} decreases from level {} ({}) to level {j} ({})",
                        node_ids[i],
                        j - 1,
                        perf[j - 1][i],
                        perf[j][i]
                    )));
                }
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for id in &node_ids {
            if !seen.insert(id) {
                return Err(CoreError::InvalidTable(format!("duplicate node `{id}`")));
            }
        }
        Ok(Self { node_ids, perf, catalog })
    }

    /// Builds a table from per-node columns (`columns[node][level]`).
    pub fn from_columns(
        columns: Vec<(NodeId, Vec<f64>)>,
        catalog: ModelCatalog,
    ) -> Result<Self, CoreError> {
        let m = catalog.len();
        for (id, col) in &columns {
            if col.len() != m {
                return Err(CoreError::InvalidTable(format!(
                    "column `{id}` has {} levels, expected {m}",
                    col.len()
                )));
            }
        }
        let perf = (0..m)
            .map(|j| columns.iter().map(|(_, c)| c[j]).collect())
            .collect();
        let ids = columns.into_iter().map(|(id, _)| id).collect();
        Self::new(ids, perf, catalog)
    }

    pub fn node_ids(&self) -> &[NodeId] {
        &self.node_ids
    }

    pub fn nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn levels(&self) -> usize {
        self.perf.len()
    }

    pub fn catalog(&self) -> &ModelCatalog {
        &self.catalog
    }

    pub fn perf(&self, level: usize, node: usize) -> f64 {
        self.perf[level][node]
    }

    pub fn row(&self, level: usize) -> &[f64] {
        &self.perf[level]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.perf
    }

    pub fn column(&self, node: usize) -> Vec<f64> {
        self.perf.iter().map(|r| r[node]).collect()
    }

    /// Combined cluster throughput when every node runs `level`.
    pub fn row_total(&self, level: usize) -> f64 {
        self.perf[level].iter().sum()
    }

    pub fn index_of(&self, id: &NodeId) -> Option<usize> {
        self.node_ids.iter().position(|n| n == id)
    }

    /// Keeps only the listed nodes, in the listed order.
    pub fn restrict(&self, nodes: &[NodeId]) -> Result<Self, CoreError> {
        let idx = nodes
            .iter()
            .map(|id| self.index_of(id).ok_or_else(|| CoreError::UnknownNode(id.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        let perf = self
            .perf
            .iter()
            .map(|row| idx.iter().map(|&i| row[i]).collect())
            .collect();
        Self::new(nodes.to_vec(), perf, self.catalog.clone())
    }

    /// Keeps rows `0..=last_level`, truncating the catalog to match.
    pub fn truncate_levels(&self, last_level: usize) -> Self {
        let keep = (last_level + 1).min(self.levels());
        Self {
            node_ids: self.node_ids.clone(),
            perf: self.perf[..keep].to_vec(),
            catalog: self.catalog.truncated(keep).expect("prefix of a valid catalog"),
        }
    }

    /// Same table with the node columns reordered by `order` (a permutation).
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            node_ids: order.iter().map(|&i| self.node_ids[i].clone()).collect(),
            perf: self
                .perf
                .iter()
                .map(|row| order.iter().map(|&i| row[i]).collect())
                .collect(),
            catalog: self.catalog.clone(),
        }
    }
}
