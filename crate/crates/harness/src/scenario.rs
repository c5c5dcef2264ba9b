use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use edgesplit_core::catalog::{default_catalog, ModelCatalog};
use edgesplit_core::policy::Strategy;
use edgesplit_core::simnode::{NodeProfile, DEFAULT_NOISE_CV};
use edgesplit_core::{InferenceRequest, NodeId};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// How worker nodes are hosted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
pub enum Mode {
    /// Worker threads connected over in-memory pipes.
    #[default]
    #[serde(rename = "inproc", alias = "in-process")]
    InProc,
    /// Worker threads connected over localhost TCP.
    #[serde(rename = "sockets")]
    Sockets,
    /// Separate `edgesplit-worker` processes connected over localhost TCP.
    #[serde(rename = "processes")]
    Processes,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::InProc => "inproc",
            Mode::Sockets => "sockets",
            Mode::Processes => "processes",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inproc" | "in-process" => Ok(Mode::InProc),
            "sockets" => Ok(Mode::Sockets),
            "processes" => Ok(Mode::Processes),
            _ => Err(format!("unknown mode `{s}` (expected inproc, sockets or processes)")),
        }
    }
}

/// A scripted node departure.
#[derive(Debug, Clone, PartialEq)]
pub enum Disconnect {
    /// The node leaves once request `request` has completed.
    AfterRequest { node: NodeId, request: u64 },
    /// The node fails part-way through its share of `request`, after
    /// finishing `fraction` of its images.
    MidRequest { node: NodeId, request: u64, fraction: f64 },
}

impl Disconnect {
    pub fn node(&self) -> &NodeId {
        match self {
            Disconnect::AfterRequest { node, .. } | Disconnect::MidRequest { node, .. } => node,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogFile {
    top5: Vec<f64>,
    alpha: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeFile {
    id: String,
    perf: Vec<f64>,
    #[serde(default = "default_noise")]
    noise_cv: f64,
    #[serde(default)]
    gateway: bool,
}

fn default_noise() -> f64 {
    DEFAULT_NOISE_CV
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RequestFile {
    id: u64,
    batch: u64,
    perf_req: f64,
    acc_req: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EventFile {
    node: String,
    after_request: Option<u64>,
    request: Option<u64>,
    at_fraction: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    mode: Mode,
    #[serde(default)]
    time_scale: f64,
    #[serde(default)]
    strategies: Option<Vec<Strategy>>,
    catalog: Option<CatalogFile>,
    nodes: Vec<NodeFile>,
    #[serde(default)]
    requests: Vec<RequestFile>,
    #[serde(default)]
    events: Vec<EventFile>,
}

/// A validated scenario: the cluster, the request queue in arrival order
/// and the scripted departures.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub seed: u64,
    pub mode: Mode,
    /// Simulated seconds per real second; 0 runs unpaced.
    pub time_scale: f64,
    pub strategies: Vec<Strategy>,
    pub catalog: ModelCatalog,
    pub gateway: NodeId,
    /// Node ground truth in declaration order. `rng_seed` is filled in per
    /// run from the scenario seed.
    pub nodes: Vec<NodeProfile>,
    pub requests: Vec<InferenceRequest>,
    pub events: Vec<Disconnect>,
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError::Invalid(msg.into()))
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = toml::from_str(text)?;
        Self::build(file)
    }

    fn build(file: ScenarioFile) -> Result<Self, ScenarioError> {
        if file.nodes.is_empty() {
            return invalid("no nodes");
        }
        if !(file.time_scale.is_finite() && file.time_scale >= 0.0) {
            return invalid(format!("time_scale {} must be non-negative", file.time_scale));
        }

        let levels = file.nodes[0].perf.len();
        let catalog = match &file.catalog {
            Some(c) => ModelCatalog::from_parts(&c.top5, &c.alpha)
                .map_err(|e| ScenarioError::Invalid(format!("catalog: {e}")))?,
            None => default_catalog().truncated(levels).map_err(|e| {
                ScenarioError::Invalid(format!("nodes list {levels} levels: {e}"))
            })?,
        };

        let mut seen = BTreeSet::new();
        let mut nodes = Vec::with_capacity(file.nodes.len());
        for n in &file.nodes {
            if !seen.insert(n.id.clone()) {
                return invalid(format!("duplicate node id `{}`", n.id));
            }
            if n.perf.len() != catalog.len() {
                return invalid(format!(
                    "node `{}` lists {} levels, the catalog has {}",
                    n.id,
                    n.perf.len(),
                    catalog.len()
                ));
            }
            let profile = NodeProfile::new(n.id.as_str(), n.perf.clone(), n.noise_cv, 0)
                .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
            nodes.push(profile);
        }

        let flagged: Vec<&NodeFile> = file.nodes.iter().filter(|n| n.gateway).collect();
        let gateway = match flagged.as_slice() {
            [] => NodeId::from(file.nodes[0].id.as_str()),
            [g] => NodeId::from(g.id.as_str()),
            _ => return invalid("more than one node is marked as gateway"),
        };

        let mut ids = BTreeSet::new();
        let mut requests = Vec::with_capacity(file.requests.len());
        for r in &file.requests {
            if !ids.insert(r.id) {
                return invalid(format!("duplicate request id {}", r.id));
            }
            let req = InferenceRequest { id: r.id, batch: r.batch, perf_req: r.perf_req, acc_req: r.acc_req };
            req.validate_for(&catalog).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
            requests.push(req);
        }
        let position: BTreeMap<u64, usize> =
            requests.iter().enumerate().map(|(i, r)| (r.id, i)).collect();

        let mut events = Vec::with_capacity(file.events.len());
        let mut targeted = BTreeSet::new();
        let mut failing_requests = BTreeSet::new();
        for e in &file.events {
            let node = NodeId::from(e.node.as_str());
            if !seen.contains(&e.node) {
                return invalid(format!("event targets unknown node `{}`", e.node));
            }
            if node == gateway {
                return invalid(format!("the gateway `{}` cannot be disconnected", e.node));
            }
            if !targeted.insert(node.clone()) {
                return invalid(format!("node `{}` is disconnected more than once", e.node));
            }
            let event = match (e.after_request, e.request, e.at_fraction) {
                (Some(k), None, None) => Disconnect::AfterRequest { node, request: k },
                (None, Some(k), Some(f)) => {
                    if !(f > 0.0 && f < 1.0) {
                        return invalid(format!("fraction {f} for node `{}` outside (0, 1)", e.node));
                    }
                    if !failing_requests.insert(k) {
                        return invalid(format!("request {k} has more than one mid-request disconnect"));
                    }
                    Disconnect::MidRequest { node, request: k, fraction: f }
                }
                _ => {
                    return invalid(format!(
                        "event for `{}` needs either `after_request` or `request` with `at_fraction`",
                        e.node
                    ))
                }
            };
            let k = match &event {
                Disconnect::AfterRequest { request, .. } | Disconnect::MidRequest { request, .. } => *request,
            };
            if !position.contains_key(&k) {
                return invalid(format!("event for `{}` refers to unknown request {k}", e.node));
            }
            events.push(event);
        }

        let strategies = file.strategies.unwrap_or_else(|| Strategy::ALL.to_vec());
        if strategies.is_empty() {
            return invalid("no strategies");
        }
        let mut unique = BTreeSet::new();
        if let Some(s) = strategies.iter().find(|s| !unique.insert(**s)) {
            return invalid(format!("strategy {s} listed twice"));
        }

        Ok(Self {
            name: file.name,
            description: file.description,
            seed: file.seed,
            mode: file.mode,
            time_scale: file.time_scale,
            strategies,
            catalog,
            gateway,
            nodes,
            requests,
            events,
        })
    }

    pub fn node_ids(&self) -> Vec<NodeId> {
        self.nodes.iter().map(|n| n.node_id.clone()).collect()
    }

    /// Node ground truth with its calibration seed derived from the
    /// scenario seed.
    pub fn seeded_profile(&self, index: usize) -> NodeProfile {
        let mut p = self.nodes[index].clone();
        p.rng_seed = splitmix(self.seed ^ splitmix(index as u64 + 1));
        p
    }

    pub fn gateway_index(&self) -> usize {
        self.nodes.iter().position(|n| n.node_id == self.gateway).expect("gateway is a node")
    }

    /// Departures that fire once `request` completes.
    pub fn leaving_after(&self, request: u64) -> Vec<NodeId> {
        self.events
            .iter()
            .filter_map(|e| match e {
                Disconnect::AfterRequest { node, request: k } if *k == request => Some(node.clone()),
                _ => None,
            })
            .collect()
    }

    /// Mid-request failure scripted for `node`, if any.
    pub fn failure_of(&self, node: &NodeId) -> Option<(u64, f64)> {
        self.events.iter().find_map(|e| match e {
            Disconnect::MidRequest { node: n, request, fraction } if n == node => Some((*request, *fraction)),
            _ => None,
        })
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
