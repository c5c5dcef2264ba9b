//! Stands up one gateway plus its workers for a single strategy and drives
//! the request queue through the gateway state machine.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::fs;
use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};
use edgesplit_core::catalog::ModelCatalog;
use edgesplit_core::fsm::{
    Event, Gateway, GatewayAction, GatewayConfig, GatewayState, WorkOrder, WorkResult, Worker,
    WorkerAction,
};
use edgesplit_core::policy::{dispatch, PolicyInput, Strategy};
use edgesplit_core::proto::{
    duplex, tcp_halves, ConnId, HeartbeatConfig, Message, Session, SessionConfig, SessionEvent,
    SessionEventKind,
};
use edgesplit_core::simnode::{
    execute_paced, profile_self, run_worker, Control, FailPlan, NodeProfile, WorkerConfig,
};
use edgesplit_core::{NodeId, RequestOutcome};
use log::{debug, info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{Mode, Scenario};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RunError {
    /// The cluster could not be brought up; no request was serviced.
    #[error("setup failed: {0}")]
    Setup(String),
    #[error("run failed: {0}")]
    Runtime(String),
}

impl RunError {
    pub fn is_setup(&self) -> bool {
        matches!(self, RunError::Setup(_))
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub mode: Mode,
    pub time_scale: f64,
    /// Worker executable for [`Mode::Processes`].
    pub worker_bin: Option<PathBuf>,
    pub setup_timeout: Duration,
    /// Give up when no event arrives for this long.
    pub stall_timeout: Duration,
    pub heartbeat: HeartbeatConfig,
}

impl RunOptions {
    pub fn for_scenario(scenario: &Scenario) -> Self {
        Self {
            mode: scenario.mode,
            time_scale: scenario.time_scale,
            worker_bin: None,
            setup_timeout: Duration::from_secs(10),
            stall_timeout: Duration::from_secs(60),
            heartbeat: HeartbeatConfig::default(),
        }
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    fn resolve_worker_bin(&self) -> Result<PathBuf, RunError> {
        if let Some(p) = &self.worker_bin {
            return Ok(p.clone());
        }
        if let Some(p) = std::env::var_os("EDGESPLIT_WORKER") {
            return Ok(PathBuf::from(p));
        }
        let exe = std::env::current_exe().map_err(|e| RunError::Setup(e.to_string()))?;
        let sibling = exe.with_file_name(format!("edgesplit-worker{}", std::env::consts::EXE_SUFFIX));
        if sibling.exists() {
            Ok(sibling)
        } else {
            Err(RunError::Setup(format!(
                "worker executable not found next to {} (set EDGESPLIT_WORKER)",
                exe.display()
            )))
        }
    }
}

/// Everything a worker process needs to impersonate one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerSpec {
    pub profile: NodeProfile,
    pub top5: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl WorkerSpec {
    pub fn new(profile: NodeProfile, catalog: &ModelCatalog) -> Self {
        Self {
            profile,
            top5: catalog.accuracies(),
            alpha: (0..catalog.len()).map(|l| catalog.alpha(l)).collect(),
        }
    }

    pub fn catalog(&self) -> Result<ModelCatalog, String> {
        ModelCatalog::from_parts(&self.top5, &self.alpha).map_err(|e| e.to_string())
    }
}

/// One gateway state machine step, for tracing.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub strategy: Strategy,
    pub from: GatewayState,
    pub event: String,
    pub to: GatewayState,
    pub actions: Vec<String>,
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {} --{}--> {}", self.strategy, self.from, self.event, self.to)?;
        if !self.actions.is_empty() {
            write!(f, " : {}", self.actions.join("; "))?;
        }
        Ok(())
    }
}

pub fn describe_event(event: &Event) -> String {
    match event {
        Event::ProfilingDone(r) => format!("ProfilingDone({})", r.node_id),
        Event::ProfileReceived(r) => format!("ProfileReceived({})", r.node_id),
        Event::WorkloadArrived(r) => format!(
            "WorkloadArrived(request {}: {} images, P={}, A={})",
            r.id, r.batch, r.perf_req, r.acc_req
        ),
        Event::DistributionComputed(a) => {
            format!("DistributionComputed(images {:?}, levels {:?})", a.images(), a.levels())
        }
        Event::BroadcastDone => "BroadcastDone".into(),
        Event::LocalInferenceDone(r) => format!("LocalInferenceDone({})", describe_result(r)),
        Event::NodeDisconnected(n) => format!("NodeDisconnected({n})"),
        Event::AssignmentReceived(o) => format!("AssignmentReceived({})", describe_order(o)),
        Event::ResultSent => "ResultSent".into(),
        Event::ResultReceived(r) => format!("ResultReceived({})", describe_result(r)),
    }
}

fn describe_order(o: &WorkOrder) -> String {
    format!("{}: {} images at a{}", o.node_id, o.images, o.level)
}

fn describe_result(r: &WorkResult) -> String {
    format!("{}: {} images, {} correct, {} ms", r.node_id, r.images_done, r.top5_correct, r.elapsed_ms)
}

pub fn describe_action(action: &GatewayAction) -> String {
    match action {
        GatewayAction::UpdateProfilingTable(n) => format!("update table with {n}"),
        GatewayAction::ComputeDistribution { request, table, redistribution } => format!(
            "{} {} images of request {} over {} nodes",
            if *redistribution { "redistribute" } else { "distribute" },
            request.batch,
            request.id,
            table.nodes()
        ),
        GatewayAction::Broadcast(orders) => format!(
            "broadcast [{}]",
            orders.iter().map(describe_order).collect::<Vec<_>>().join(", ")
        ),
        GatewayAction::RunLocalInference(o) => format!("run local {}", describe_order(o)),
        GatewayAction::DropNode(n) => format!("drop {n}"),
        GatewayAction::RequestCompleted(o) => format!(
            "request {} completed: {:.3} inf/s, top-5 {:.4}",
            o.request_id, o.achieved_throughput, o.empirical_top5
        ),
        GatewayAction::Replay(e) => format!("replay {}", describe_event(e)),
    }
}

enum Host {
    Thread { handle: JoinHandle<Result<(), String>>, control: Sender<Control> },
    Process(Child),
}

struct Link {
    session: Session,
    reader: JoinHandle<()>,
}

/// A running gateway plus workers. Dropping it tears everything down.
struct Cluster {
    events: Receiver<SessionEvent>,
    links: BTreeMap<ConnId, Link>,
    hosts: BTreeMap<NodeId, Host>,
    conn_node: BTreeMap<ConnId, NodeId>,
    node_conn: BTreeMap<NodeId, ConnId>,
    _scratch: Option<tempfile::TempDir>,
}

fn setup(msg: impl fmt::Display) -> RunError {
    RunError::Setup(msg.to_string())
}

fn runtime(msg: impl fmt::Display) -> RunError {
    RunError::Runtime(msg.to_string())
}

impl Cluster {
    fn launch(scenario: &Scenario, opts: &RunOptions) -> Result<Self, RunError> {
        let (tx, events) = unbounded();
        let mut cluster = Cluster {
            events,
            links: BTreeMap::new(),
            hosts: BTreeMap::new(),
            conn_node: BTreeMap::new(),
            node_conn: BTreeMap::new(),
            _scratch: None,
        };
        let workers: Vec<usize> =
            (0..scenario.nodes.len()).filter(|&i| i != scenario.gateway_index()).collect();
        let gateway_session = SessionConfig::with_heartbeat(opts.heartbeat);

        let worker_config = |i: usize| {
            let profile = scenario.seeded_profile(i);
            let fail = scenario
                .failure_of(&profile.node_id)
                .map(|(request_id, fraction)| FailPlan { request_id, fraction });
            WorkerConfig {
                profile,
                catalog: scenario.catalog.clone(),
                time_scale: opts.time_scale,
                fail,
                session: SessionConfig::default(),
            }
        };

        match opts.mode {
            Mode::InProc => {
                for (conn, &i) in workers.iter().enumerate() {
                    let ((gr, gw), (wr, ww)) = duplex();
                    let (session, reader) = Session::spawn(conn as ConnId, gr, gw, gateway_session, tx.clone());
                    cluster.links.insert(conn as ConnId, Link { session, reader });
                    let config = worker_config(i);
                    let node = config.profile.node_id.clone();
                    let (control, control_rx) = unbounded();
                    let handle = spawn_worker_thread(&node, move || {
                        run_worker(config, wr, ww, control_rx).map(drop).map_err(|e| e.to_string())
                    })?;
                    cluster.hosts.insert(node, Host::Thread { handle, control });
                }
            }
            Mode::Sockets | Mode::Processes => {
                let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| setup(format!("cannot listen: {e}")))?;
                let addr = listener.local_addr().map_err(setup)?;
                if opts.mode == Mode::Sockets {
                    for &i in &workers {
                        let config = worker_config(i);
                        let node = config.profile.node_id.clone();
                        let (control, control_rx) = unbounded();
                        let handle = spawn_worker_thread(&node, move || {
                            let stream = TcpStream::connect(addr).map_err(|e| e.to_string())?;
                            let (r, w) = tcp_halves(stream).map_err(|e| e.to_string())?;
                            run_worker(config, r, w, control_rx).map(drop).map_err(|e| e.to_string())
                        })?;
                        cluster.hosts.insert(node, Host::Thread { handle, control });
                    }
                } else {
                    cluster.spawn_processes(scenario, opts, &workers, addr)?;
                }
                cluster.accept(&listener, workers.len(), opts, gateway_session, &tx)?;
            }
        }
        Ok(cluster)
    }

    fn spawn_processes(
        &mut self,
        scenario: &Scenario,
        opts: &RunOptions,
        workers: &[usize],
        addr: SocketAddr,
    ) -> Result<(), RunError> {
        let bin = opts.resolve_worker_bin()?;
        let dir = tempfile::tempdir().map_err(setup)?;
        for &i in workers {
            let mut profile = scenario.seeded_profile(i);
            let node = profile.node_id.clone();
            let fail = scenario.failure_of(&node);
            // TOML integers are signed, so the seed travels on the command line
            let seed = std::mem::take(&mut profile.rng_seed);
            let spec = WorkerSpec::new(profile, &scenario.catalog);
            let path = dir.path().join(format!("worker-{i}.toml"));
            let text = toml::to_string(&spec).map_err(setup)?;
            fs::write(&path, text).map_err(setup)?;
            let mut cmd = Command::new(&bin);
            cmd.arg("--node-id")
                .arg(node.as_str())
                .arg("--gateway-addr")
                .arg(addr.to_string())
                .arg("--profile-file")
                .arg(&path)
                .arg("--seed")
                .arg(seed.to_string())
                .arg("--time-scale")
                .arg(opts.time_scale.to_string())
                .stdin(Stdio::null());
            if let Some((request, fraction)) = fail {
                cmd.arg("--fail-at").arg(format!("{request}:{fraction}"));
            }
            let child = cmd.spawn().map_err(|e| setup(format!("cannot start {}: {e}", bin.display())))?;
            self.hosts.insert(node, Host::Process(child));
        }
        self._scratch = Some(dir);
        Ok(())
    }

    fn accept(
        &mut self,
        listener: &TcpListener,
        expected: usize,
        opts: &RunOptions,
        config: SessionConfig,
        tx: &Sender<SessionEvent>,
    ) -> Result<(), RunError> {
        listener.set_nonblocking(true).map_err(setup)?;
        let deadline = Instant::now() + opts.setup_timeout;
        let mut conn: ConnId = 0;
        while (conn as usize) < expected {
            match listener.accept() {
                Ok((stream, _)) => {
                    stream.set_nonblocking(false).map_err(setup)?;
                    let (r, w) = tcp_halves(stream).map_err(setup)?;
                    let (session, reader) = Session::spawn(conn, r, w, config, tx.clone());
                    self.links.insert(conn, Link { session, reader });
                    conn += 1;
                }
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                    if Instant::now() > deadline {
                        return Err(setup(format!("only {conn} of {expected} workers connected")));
                    }
                    self.check_hosts()?;
                    thread::sleep(Duration::from_millis(5));
                }
                Err(e) => return Err(setup(format!("accept failed: {e}"))),
            }
        }
        Ok(())
    }

    /// Fails if a worker has already exited while the cluster is forming.
    fn check_hosts(&mut self) -> Result<(), RunError> {
        for (node, host) in &mut self.hosts {
            let exited = match host {
                Host::Thread { handle, .. } => handle.is_finished(),
                Host::Process(child) => child.try_wait().map_err(setup)?.is_some(),
            };
            if exited {
                return Err(setup(format!("worker {node} exited during setup")));
            }
        }
        Ok(())
    }

    fn session(&self, node: &NodeId) -> Option<&Session> {
        self.node_conn.get(node).and_then(|c| self.links.get(c)).map(|l| &l.session)
    }

    /// Asks a worker to leave. Thread workers leave on their own; processes
    /// are told goodbye by the gateway.
    fn retire(&self, node: &NodeId) {
        match self.hosts.get(node) {
            Some(Host::Thread { control, .. }) => {
                let _ = control.send(Control::Disconnect);
            }
            _ => {
                if let Some(s) = self.session(node) {
                    s.close();
                }
            }
        }
    }

    fn shutdown(&mut self) {
        for host in self.hosts.values() {
            if let Host::Thread { control, .. } = host {
                let _ = control.send(Control::Disconnect);
            }
        }
        for link in self.links.values() {
            link.session.close();
        }
        for (node, host) in std::mem::take(&mut self.hosts) {
            match host {
                Host::Thread { handle, .. } => match handle.join() {
                    Ok(Ok(())) => {}
                    Ok(Err(e)) => warn!("worker {node}: {e}"),
                    Err(_) => warn!("worker {node} panicked"),
                },
                Host::Process(mut child) => {
                    let deadline = Instant::now() + Duration::from_secs(2);
                    loop {
                        match child.try_wait() {
                            Ok(Some(_)) => break,
                            Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(10)),
                            _ => {
                                let _ = child.kill();
                                let _ = child.wait();
                                break;
                            }
                        }
                    }
                }
            }
        }
        for (_, link) in std::mem::take(&mut self.links) {
            let _ = link.reader.join();
        }
    }
}

impl Drop for Cluster {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn spawn_worker_thread(
    node: &NodeId,
    body: impl FnOnce() -> Result<(), String> + Send + 'static,
) -> Result<JoinHandle<Result<(), String>>, RunError> {
    thread::Builder::new()
        .name(format!("worker-{node}"))
        .spawn(body)
        .map_err(|e| setup(format!("cannot start worker {node}: {e}")))
}

/// The gateway node's own executor, driven through a worker state machine.
struct LocalNode {
    fsm: Worker,
    profile: NodeProfile,
    catalog: ModelCatalog,
    time_scale: f64,
}

impl LocalNode {
    fn run(&mut self, order: WorkOrder) -> Result<WorkResult, RunError> {
        let actions = self.fsm.step(Event::AssignmentReceived(order)).map_err(runtime)?;
        let Some(WorkerAction::RunInference(order)) = actions.into_iter().next() else {
            return Err(runtime("local executor did not start"));
        };
        let run = execute_paced(&self.profile, &self.catalog, &order, order.images, self.time_scale, || false);
        let result = WorkResult {
            request_id: order.request_id,
            node_id: order.node_id.clone(),
            images_done: run.images_done,
            top5_correct: run.top5_correct,
            elapsed_ms: (run.elapsed * 1000.0).round() as u64,
        };
        self.fsm.step(Event::LocalInferenceDone(result.clone())).map_err(runtime)?;
        self.fsm.step(Event::ResultSent).map_err(runtime)?;
        Ok(result)
    }
}

/// Runs the scenario's request queue under one strategy on a fresh cluster
/// and returns the outcomes in completion order.
pub fn run_strategy(
    scenario: &Scenario,
    strategy: Strategy,
    opts: &RunOptions,
    trace: &mut dyn FnMut(&Transition),
) -> Result<Vec<RequestOutcome>, RunError> {
    let mut cluster = Cluster::launch(scenario, opts)?;
    let gn_index = scenario.gateway_index();
    let gn_profile = scenario.seeded_profile(gn_index);
    let mut gateway = Gateway::new(GatewayConfig {
        gateway: scenario.gateway.clone(),
        roster: scenario.node_ids(),
        catalog: scenario.catalog.clone(),
        seed: scenario.seed,
    });
    let mut local = LocalNode {
        fsm: Worker::new(scenario.gateway.clone()),
        profile: gn_profile.clone(),
        catalog: scenario.catalog.clone(),
        time_scale: opts.time_scale,
    };
    let mut driver = Driver { strategy, gateway: &mut gateway, trace };

    let report = profile_self(&gn_profile, &scenario.catalog);
    local.fsm.step(Event::ProfilingDone(report.clone())).map_err(runtime)?;
    driver.step(Event::ProfilingDone(report)).map_err(|e| setup(e.to_string()))?;
    form_cluster(&mut cluster, scenario, opts, &mut driver)?;
    info!("{strategy}: cluster of {} nodes ready", scenario.nodes.len());

    let mut pending: VecDeque<Event> =
        scenario.requests.iter().cloned().map(Event::WorkloadArrived).collect();
    let mut outcomes = Vec::with_capacity(scenario.requests.len());
    let mut retired: BTreeSet<NodeId> = BTreeSet::new();
    loop {
        if outcomes.len() == scenario.requests.len() && pending.is_empty() && driver.gateway.is_idle() {
            break;
        }
        let event = match pending.pop_front() {
            Some(e) => e,
            None => {
                let ev = match cluster.events.recv_timeout(opts.stall_timeout) {
                    Ok(ev) => ev,
                    Err(RecvTimeoutError::Timeout) => {
                        return Err(runtime(format!("no progress for {:?}", opts.stall_timeout)))
                    }
                    Err(RecvTimeoutError::Disconnected) => return Err(runtime("all sessions ended")),
                };
                match translate(&cluster, &retired, ev)? {
                    Some(e) => e,
                    None => continue,
                }
            }
        };
        let mut leaving = Vec::new();
        for action in driver.step(event)? {
            match action {
                GatewayAction::UpdateProfilingTable(_) => {}
                GatewayAction::ComputeDistribution { request, table, .. } => {
                    let input = PolicyInput::new(table, request).map_err(runtime)?;
                    let out = dispatch(strategy, &input);
                    debug!("{strategy}: {:?} {:?}", out.status, out.levels());
                    pending.push_front(Event::DistributionComputed(out.assignment));
                }
                GatewayAction::Broadcast(orders) => {
                    for order in &orders {
                        match cluster.session(&order.node_id) {
                            Some(s) => {
                                if let Err(e) = s.send(&Message::from(order)) {
                                    // the session's close event follows
                                    warn!("cannot reach {}: {e}", order.node_id);
                                }
                            }
                            None => return Err(runtime(format!("no session for {}", order.node_id))),
                        }
                    }
                    pending.push_front(Event::BroadcastDone);
                }
                GatewayAction::RunLocalInference(order) => {
                    let result = local.run(order)?;
                    pending.push_front(Event::LocalInferenceDone(result));
                }
                GatewayAction::DropNode(node) => {
                    retired.insert(node.clone());
                    if let Some(s) = cluster.session(&node) {
                        s.close();
                    }
                }
                GatewayAction::RequestCompleted(outcome) => {
                    leaving.extend(scenario.leaving_after(outcome.request_id));
                    outcomes.push(outcome);
                }
                GatewayAction::Replay(e) => pending.push_back(e),
            }
        }
        // scripted departures take effect before the next request starts
        for node in leaving.into_iter().rev() {
            info!("{strategy}: {node} leaves the cluster");
            retired.insert(node.clone());
            cluster.retire(&node);
            pending.push_front(Event::NodeDisconnected(node));
        }
    }
    cluster.shutdown();
    Ok(outcomes)
}

struct Driver<'a> {
    strategy: Strategy,
    gateway: &'a mut Gateway,
    trace: &'a mut dyn FnMut(&Transition),
}

impl Driver<'_> {
    fn step(&mut self, event: Event) -> Result<Vec<GatewayAction>, RunError> {
        let from = self.gateway.state();
        let label = describe_event(&event);
        let actions = self
            .gateway
            .step(event)
            .map_err(|e| runtime(format!("gateway rejected {label} in {from}: {e}")))?;
        (self.trace)(&Transition {
            strategy: self.strategy,
            from,
            event: label,
            to: self.gateway.state(),
            actions: actions.iter().map(describe_action).collect(),
        });
        Ok(actions)
    }
}

/// Waits for every worker to introduce itself and report its profile.
fn form_cluster(
    cluster: &mut Cluster,
    scenario: &Scenario,
    opts: &RunOptions,
    driver: &mut Driver<'_>,
) -> Result<(), RunError> {
    let expected: BTreeSet<NodeId> =
        scenario.node_ids().into_iter().filter(|n| *n != scenario.gateway).collect();
    let deadline = Instant::now() + opts.setup_timeout;
    let mut profiled = BTreeSet::new();
    while profiled.len() < expected.len() {
        let ev = match cluster.events.recv_deadline(deadline) {
            Ok(ev) => ev,
            Err(_) => {
                let missing: Vec<String> =
                    expected.difference(&profiled).map(|n| n.to_string()).collect();
                return Err(setup(format!("no profile from {}", missing.join(", "))));
            }
        };
        match ev.kind {
            SessionEventKind::Message(Message::Hello { node_id, .. }) => {
                if !expected.contains(&node_id) {
                    return Err(setup(format!("unexpected node `{node_id}` joined")));
                }
                if cluster.node_conn.contains_key(&node_id) {
                    return Err(setup(format!("node `{node_id}` joined twice")));
                }
                cluster.conn_node.insert(ev.conn, node_id.clone());
                cluster.node_conn.insert(node_id, ev.conn);
            }
            SessionEventKind::Message(msg @ Message::ProfileReport { .. }) => {
                let report = msg.into_profile().expect("profile report");
                if cluster.conn_node.get(&ev.conn) != Some(&report.node_id) {
                    return Err(setup(format!("profile for `{}` on the wrong connection", report.node_id)));
                }
                profiled.insert(report.node_id.clone());
                driver.step(Event::ProfileReceived(report)).map_err(|e| setup(e.to_string()))?;
            }
            SessionEventKind::Message(other) => {
                warn!("ignoring {} during setup", other.type_name());
            }
            SessionEventKind::Closed(reason) => {
                let who = cluster.conn_node.get(&ev.conn).map(|n| n.to_string());
                return Err(setup(format!(
                    "worker {} left during setup: {reason:?}",
                    who.unwrap_or_else(|| format!("on connection {}", ev.conn))
                )));
            }
        }
    }
    Ok(())
}

fn translate(
    cluster: &Cluster,
    retired: &BTreeSet<NodeId>,
    ev: SessionEvent,
) -> Result<Option<Event>, RunError> {
    let node = cluster.conn_node.get(&ev.conn);
    match ev.kind {
        SessionEventKind::Message(msg @ Message::Result { .. }) => {
            let result = msg.into_result().expect("result");
            if node != Some(&result.node_id) {
                return Err(runtime(format!("result for `{}` on the wrong connection", result.node_id)));
            }
            Ok(Some(Event::ResultReceived(result)))
        }
        SessionEventKind::Message(other) => {
            warn!("ignoring {} from connection {}", other.type_name(), ev.conn);
            Ok(None)
        }
        SessionEventKind::Closed(reason) => match node {
            Some(n) if !retired.contains(n) => {
                info!("{n} disconnected: {reason:?}");
                Ok(Some(Event::NodeDisconnected(n.clone())))
            }
            _ => Ok(None),
        },
    }
}
