use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use super::event::{Event, ProfileReport, WorkOrder, WorkResult};
use super::ledger::WorkLedger;
use super::FsmError;
use crate::assignment::Assignment;
use crate::catalog::ModelCatalog;
use crate::outcome::RequestOutcome;
use crate::request::InferenceRequest;
use crate::table::ProfilingTable;
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GatewayState {
    Profile,
    NetCom,
    Distribute,
    Inference,
}

impl GatewayState {
    pub const ALL: [GatewayState; 4] = [
        GatewayState::Profile,
        GatewayState::NetCom,
        GatewayState::Distribute,
        GatewayState::Inference,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GatewayState::Profile => "Profile",
            GatewayState::NetCom => "NetCom",
            GatewayState::Distribute => "Distribute",
            GatewayState::Inference => "Inference",
        }
    }
}

impl fmt::Display for GatewayState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Side effects requested by the gateway machine. The runtime executes
/// them; the machine itself never touches the network or a clock.
#[derive(Debug, Clone, PartialEq)]
pub enum GatewayAction {
    UpdateProfilingTable(NodeId),
    /// Run the dispatch strategy for `request` over `table`. The request's
    /// batch is the number of images still to place, which after a
    /// disconnection is only the departed node's unfinished work.
    ComputeDistribution {
        request: InferenceRequest,
        table: ProfilingTable,
        redistribution: bool,
    },
    Broadcast(Vec<WorkOrder>),
    RunLocalInference(WorkOrder),
    DropNode(NodeId),
    RequestCompleted(RequestOutcome),
    /// Feed this event back into the machine before anything else queued.
    Replay(Event),
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub gateway: NodeId,
    /// Preferred column order of the profiling table. Nodes not listed are
    /// appended in id order.
    pub roster: Vec<NodeId>,
    pub catalog: ModelCatalog,
    /// Base seed for per-order executor seeds.
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Computing,
    Broadcasting,
    Local,
    Waiting,
}

#[derive(Debug, Clone)]
struct Active {
    request: InferenceRequest,
    ledger: WorkLedger,
    epoch: u32,
    issue_ms: u64,
    phase: Phase,
    local: Option<WorkOrder>,
    redistributions: u32,
}

/// Gateway resource manager: profiles the cluster, takes requests one at a
/// time from its queue, distributes them, runs its own share and collects
/// results, redistributing a departed node's unfinished images.
#[derive(Debug, Clone)]
pub struct Gateway {
    state: GatewayState,
    config: GatewayConfig,
    profiles: BTreeMap<NodeId, ProfileReport>,
    dropped: BTreeSet<NodeId>,
    queue: VecDeque<InferenceRequest>,
    /// Request popped from the queue whose replay is on its way.
    reserved: Option<u64>,
    active: Option<Active>,
    deferred: Vec<Event>,
    clock_ms: u64,
}

/// Pure transition function: the machine is not modified.
pub fn gateway_step(
    gateway: &Gateway,
    event: Event,
) -> Result<(Gateway, Vec<GatewayAction>), FsmError> {
    let mut next = gateway.clone();
    let actions = next.apply(event)?;
    Ok((next, actions))
}

/// Seed for one work order; distinct per request, distribution round and node.
pub fn order_seed(base: u64, request_id: u64, epoch: u32, node: &NodeId) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    let mut fnv = 0xcbf2_9ce4_8422_2325u64;
    for b in node.as_str().bytes() {
        fnv ^= u64::from(b);
        fnv = fnv.wrapping_mul(0x0100_0000_01b3);
    }
    mix(mix(mix(base ^ request_id) ^ u64::from(epoch)) ^ fnv)
}

impl Gateway {
    pub fn new(config: GatewayConfig) -> Self {
        Self {
            state: GatewayState::Profile,
            config,
            profiles: BTreeMap::new(),
            dropped: BTreeSet::new(),
            queue: VecDeque::new(),
            reserved: None,
            active: None,
            deferred: Vec::new(),
            clock_ms: 0,
        }
    }

    pub fn state(&self) -> GatewayState {
        self.state
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    /// Profiled nodes that have not disconnected, in table order.
    pub fn live_nodes(&self) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = self
            .config
            .roster
            .iter()
            .filter(|n| self.is_live(n))
            .cloned()
            .collect();
        for id in self.profiles.keys() {
            if self.is_live(id) && !out.contains(id) {
                out.push(id.clone());
            }
        }
        out
    }

    fn is_live(&self, node: &NodeId) -> bool {
        self.profiles.contains_key(node) && !self.dropped.contains(node)
    }

    pub fn is_profiled(&self, node: &NodeId) -> bool {
        self.profiles.contains_key(node)
    }

    pub fn is_dropped(&self, node: &NodeId) -> bool {
        self.dropped.contains(node)
    }

    /// Profiling table over the live nodes.
    pub fn table(&self) -> Option<ProfilingTable> {
        let columns: Vec<(NodeId, Vec<f64>)> = self
            .live_nodes()
            .into_iter()
            .map(|id| {
                let col = self.profiles[&id].perf_column.clone();
                (id, col)
            })
            .collect();
        if columns.is_empty() {
            return None;
        }
        ProfilingTable::from_columns(columns, self.config.catalog.clone()).ok()
    }

    pub fn queued(&self) -> usize {
        self.queue.len() + usize::from(self.reserved.is_some())
    }

    pub fn active_request(&self) -> Option<&InferenceRequest> {
        self.active.as_ref().map(|a| &a.request)
    }

    /// No request in flight and none waiting.
    pub fn is_idle(&self) -> bool {
        self.active.is_none() && self.queued() == 0 && self.deferred.is_empty()
    }

    /// Simulated time at which the last completed request finished.
    pub fn clock_ms(&self) -> u64 {
        self.clock_ms
    }

    /// Applies one event. On error the machine is left unchanged.
    pub fn step(&mut self, event: Event) -> Result<Vec<GatewayAction>, FsmError> {
        let (next, actions) = gateway_step(self, event)?;
        *self = next;
        Ok(actions)
    }

    fn violation(&self, event: &Event) -> FsmError {
        FsmError::ProtocolViolation { state: self.state.name(), event: event.tag() }
    }

    fn apply(&mut self, event: Event) -> Result<Vec<GatewayAction>, FsmError> {
        use GatewayState::*;
        match (self.state, event) {
            (Profile, Event::ProfilingDone(report)) => {
                if report.node_id != self.config.gateway {
                    return Err(FsmError::InvalidProfile {
                        node: report.node_id,
                        reason: "local profile must come from the gateway node".into(),
                    });
                }
                self.accept_profile(report.clone())?;
                self.state = NetCom;
                let mut actions = vec![GatewayAction::UpdateProfilingTable(report.node_id)];
                if let Some(next) = self.queue.pop_front() {
                    self.reserved = Some(next.id);
                    actions.push(GatewayAction::Replay(Event::WorkloadArrived(next)));
                }
                Ok(actions)
            }

            (_, Event::ProfileReceived(report)) => {
                if report.node_id == self.config.gateway {
                    return Err(FsmError::InvalidProfile {
                        node: report.node_id,
                        reason: "the gateway profiles itself".into(),
                    });
                }
                let node = report.node_id.clone();
                self.accept_profile(report)?;
                self.dropped.remove(&node);
                Ok(vec![GatewayAction::UpdateProfilingTable(node)])
            }

            (_, Event::WorkloadArrived(request)) => {
                request
                    .validate_for(&self.config.catalog)
                    .map_err(FsmError::InvalidRequest)?;
                if self.state != NetCom || self.active.is_some() {
                    self.queue.push_back(request);
                    return Ok(vec![]);
                }
                let request = match self.reserved {
                    Some(id) if id == request.id => {
                        self.reserved = None;
                        request
                    }
                    Some(_) => {
                        self.queue.push_back(request);
                        return Ok(vec![]);
                    }
                    None => match self.queue.pop_front() {
                        Some(front) => {
                            self.queue.push_back(request);
                            front
                        }
                        None => request,
                    },
                };
                Ok(self.start(request))
            }

            (Distribute, Event::DistributionComputed(assignment)) => self.accept_distribution(assignment),

            (NetCom, Event::BroadcastDone) => {
                let active = self.active.as_mut().filter(|a| a.phase == Phase::Broadcasting);
                let Some(active) = active else {
                    return Err(FsmError::ProtocolViolation {
                        state: NetCom.name(),
                        event: super::EventTag::BroadcastDone,
                    });
                };
                active.phase = Phase::Local;
                let order = active.local.take().expect("set with the broadcast");
                self.state = Inference;
                Ok(vec![GatewayAction::RunLocalInference(order)])
            }

            (Inference, Event::LocalInferenceDone(result)) => {
                if result.node_id != self.config.gateway {
                    return Err(FsmError::UnexpectedResult {
                        node: result.node_id,
                        request_id: result.request_id,
                    });
                }
                self.record(&result)?;
                self.active.as_mut().expect("active during inference").phase = Phase::Waiting;
                self.state = NetCom;
                let mut actions: Vec<GatewayAction> =
                    self.deferred.drain(..).map(GatewayAction::Replay).collect();
                actions.extend(self.check_complete());
                Ok(actions)
            }

            (NetCom | Distribute | Inference, Event::ResultReceived(result)) => {
                if result.node_id == self.config.gateway || self.dropped.contains(&result.node_id) {
                    return Err(FsmError::UnexpectedResult {
                        node: result.node_id,
                        request_id: result.request_id,
                    });
                }
                self.record(&result)?;
                Ok(self.check_complete())
            }

            (state, Event::NodeDisconnected(node)) => {
                if node == self.config.gateway {
                    return Err(FsmError::GatewayDisconnected(node));
                }
                let busy = self.active.as_ref().is_some_and(|a| a.phase != Phase::Waiting);
                if state != Profile && busy {
                    self.deferred.push(Event::NodeDisconnected(node));
                    return Ok(vec![]);
                }
                if !self.dropped.insert(node.clone()) {
                    return Ok(vec![]);
                }
                let mut actions = vec![GatewayAction::DropNode(node.clone())];
                if let Some(active) = self.active.as_mut() {
                    let gone = active.ledger.reclaim(&node);
                    if gone.images > 0 {
                        let gw_clock = active.ledger.clock_ms(&self.config.gateway);
                        active.issue_ms = gone.at_ms.max(gw_clock);
                        active.phase = Phase::Computing;
                        active.redistributions += 1;
                        let request = active.request.with_batch(gone.images);
                        let table = self.table().expect("gateway stays live");
                        self.state = Distribute;
                        actions.push(GatewayAction::ComputeDistribution {
                            request,
                            table,
                            redistribution: true,
                        });
                        return Ok(actions);
                    }
                    actions.extend(self.check_complete());
                }
                Ok(actions)
            }

            (_, event) => Err(self.violation(&event)),
        }
    }

    fn accept_profile(&mut self, report: ProfileReport) -> Result<(), FsmError> {
        ProfilingTable::from_columns(
            vec![(report.node_id.clone(), report.perf_column.clone())],
            self.config.catalog.clone(),
        )
        .map_err(|e| FsmError::InvalidProfile {
            node: report.node_id.clone(),
            reason: e.to_string(),
        })?;
        if report.acc.len() != self.config.catalog.len() {
            return Err(FsmError::InvalidProfile {
                node: report.node_id,
                reason: format!(
                    "{} accuracy entries for {} levels",
                    report.acc.len(),
                    self.config.catalog.len()
                ),
            });
        }
        self.profiles.insert(report.node_id.clone(), report);
        Ok(())
    }

    fn start(&mut self, request: InferenceRequest) -> Vec<GatewayAction> {
        let table = self.table().expect("gateway is profiled in NetCom");
        self.active = Some(Active {
            ledger: WorkLedger::new(request.batch, self.clock_ms),
            request: request.clone(),
            epoch: 0,
            issue_ms: self.clock_ms,
            phase: Phase::Computing,
            local: None,
            redistributions: 0,
        });
        self.state = GatewayState::Distribute;
        vec![GatewayAction::ComputeDistribution { request, table, redistribution: false }]
    }

    fn accept_distribution(&mut self, assignment: Assignment) -> Result<Vec<GatewayAction>, FsmError> {
        let live = self.live_nodes();
        let gateway = self.config.gateway.clone();
        let seed = self.config.seed;
        let active = self
            .active
            .as_mut()
            .filter(|a| a.phase == Phase::Computing)
            .ok_or(FsmError::ProtocolViolation {
                state: GatewayState::Distribute.name(),
                event: super::EventTag::DistributionComputed,
            })?;
        let wanted = active.ledger.unissued();
        if assignment.total_images() != wanted {
            return Err(FsmError::InvalidAssignment(format!(
                "assignment covers {} images, {} to place",
                assignment.total_images(),
                wanted
            )));
        }
        let mut seen = BTreeSet::new();
        for share in &assignment.shares {
            if !live.contains(&share.node_id) || !seen.insert(&share.node_id) {
                return Err(FsmError::InvalidAssignment(format!(
                    "share for unavailable or repeated node `{}`",
                    share.node_id
                )));
            }
            if share.level >= self.config.catalog.len() {
                return Err(FsmError::InvalidAssignment(format!(
                    "level {} out of range",
                    share.level
                )));
            }
        }

        let request_id = active.request.id;
        let epoch = active.epoch;
        active.epoch += 1;
        let mut orders = Vec::new();
        let mut local = None;
        for share in &assignment.shares {
            active.ledger.issue(&share.node_id, share.images, active.issue_ms)?;
            let order = WorkOrder {
                request_id,
                node_id: share.node_id.clone(),
                images: share.images,
                level: share.level,
                seed: order_seed(seed, request_id, epoch, &share.node_id),
            };
            if share.node_id == gateway {
                local = Some(order);
            } else {
                orders.push(order);
            }
        }
        let local = match local {
            Some(order) => order,
            None => {
                active.ledger.issue(&gateway, 0, active.issue_ms)?;
                WorkOrder {
                    request_id,
                    node_id: gateway.clone(),
                    images: 0,
                    level: 0,
                    seed: order_seed(seed, request_id, epoch, &gateway),
                }
            }
        };
        active.local = Some(local);
        active.phase = Phase::Broadcasting;
        self.state = GatewayState::NetCom;
        Ok(vec![GatewayAction::Broadcast(orders)])
    }

    fn record(&mut self, result: &WorkResult) -> Result<(), FsmError> {
        let active = self
            .active
            .as_mut()
            .filter(|a| a.request.id == result.request_id)
            .ok_or_else(|| FsmError::UnexpectedResult {
                node: result.node_id.clone(),
                request_id: result.request_id,
            })?;
        active.ledger.record(result)?;
        Ok(())
    }

    fn check_complete(&mut self) -> Vec<GatewayAction> {
        let done = self.state == GatewayState::NetCom
            && self
                .active
                .as_ref()
                .is_some_and(|a| a.phase == Phase::Waiting && a.ledger.is_complete());
        if !done {
            return vec![];
        }
        let active = self.active.take().expect("checked");
        let ledger = &active.ledger;
        let request = &active.request;
        let finish = ledger.finish_ms();
        let makespan_ms = finish - ledger.start_ms();
        let makespan = makespan_ms as f64 / 1000.0;
        let achieved = if makespan_ms == 0 {
            f64::INFINITY
        } else {
            request.batch as f64 / makespan
        };
        let empirical = ledger.correct() as f64 / request.batch as f64;
        let outcome = RequestOutcome {
            request_id: request.id,
            batch: request.batch,
            perf_req: request.perf_req,
            acc_req: request.acc_req,
            achieved_throughput: achieved,
            empirical_top5: empirical,
            makespan,
            per_node: ledger.node_outcomes(),
            redistributions: active.redistributions,
            duplicate_images: ledger.duplicates(),
            perf_violation: achieved + 1e-9 < request.perf_req,
            acc_violation: empirical + 1e-9 < request.acc_req,
        };
        self.clock_ms = finish;
        let mut actions = vec![GatewayAction::RequestCompleted(outcome)];
        if let Some(next) = self.queue.pop_front() {
            self.reserved = Some(next.id);
            actions.push(GatewayAction::Replay(Event::WorkloadArrived(next)));
        }
        actions
    }
}
