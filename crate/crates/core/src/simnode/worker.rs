use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{never, select, unbounded, Receiver};
use log::{debug, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::executor::{profile_self, ImageStream};
use super::NodeProfile;
use crate::catalog::ModelCatalog;
use crate::fsm::{Event, FsmError, WorkOrder, WorkResult, Worker, WorkerAction};
use crate::proto::{
    CloseReason, Message, ProtoError, ReadHalf, Session, SessionConfig, SessionEventKind, WriteHalf,
};
use crate::NodeId;

/// Make the worker fail part-way through its first order of a request:
/// after `floor(fraction * images)` images it reports what it finished and
/// drops the connection without a goodbye. Orders with no images are
/// served normally.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailPlan {
    pub request_id: u64,
    pub fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    /// Leave the cluster gracefully.
    Disconnect,
}

#[derive(Debug, Clone)]
pub struct WorkerConfig {
    pub profile: NodeProfile,
    pub catalog: ModelCatalog,
    /// Simulated seconds per real second; 0 runs as fast as possible.
    pub time_scale: f64,
    pub fail: Option<FailPlan>,
    pub session: SessionConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub enum WorkerExit {
    GatewayClosed(CloseReason),
    Disconnected,
    Failed { request_id: u64, images_done: u64 },
}

#[derive(Debug, Error)]
pub enum WorkerError {
    #[error(transparent)]
    Proto(#[from] ProtoError),
    #[error(transparent)]
    Fsm(#[from] FsmError),
}

/// Sleeps so that simulated time advances at `time_scale` times real time.
#[derive(Debug, Clone, Copy)]
pub struct Pacer {
    time_scale: f64,
    start: Instant,
}

impl Pacer {
    pub fn new(time_scale: f64) -> Self {
        Self { time_scale, start: Instant::now() }
    }

    pub fn wait_until(&self, simulated: f64) {
        if self.time_scale <= 0.0 {
            return;
        }
        let target = Duration::from_secs_f64(simulated / self.time_scale);
        let now = self.start.elapsed();
        if target > now + Duration::from_millis(1) {
            thread::sleep(target - now);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacedRun {
    pub images_done: u64,
    pub top5_correct: u64,
    pub elapsed: f64,
    pub interrupted: bool,
}

/// Runs up to `images` images of an order in real time scaled by
/// `time_scale`, checking `stop` between images.
pub fn execute_paced(
    profile: &NodeProfile,
    catalog: &ModelCatalog,
    order: &WorkOrder,
    images: u64,
    time_scale: f64,
    mut stop: impl FnMut() -> bool,
) -> PacedRun {
    let pacer = Pacer::new(time_scale);
    let mut run = PacedRun { images_done: 0, top5_correct: 0, elapsed: 0.0, interrupted: false };
    let stream = ImageStream::for_level(profile, catalog, order.level, order.seed);
    for (latency, correct) in stream.take(images as usize) {
        if stop() {
            run.interrupted = true;
            break;
        }
        run.elapsed += latency;
        run.images_done += 1;
        run.top5_correct += u64::from(correct);
        pacer.wait_until(run.elapsed);
    }
    run
}

/// Serves one worker connection until the gateway goes away, the worker is
/// told to leave, or its fail plan fires.
pub fn run_worker(
    config: WorkerConfig,
    reader: impl ReadHalf,
    writer: impl WriteHalf,
    control: Receiver<Control>,
) -> Result<WorkerExit, WorkerError> {
    let node = config.profile.node_id.clone();
    let (tx, events) = unbounded();
    let (session, reader_thread) = Session::spawn(0, reader, writer, config.session, tx);
    let result = serve(&config, &node, &session, &events, &control);
    session.abort();
    let _ = reader_thread.join();
    result
}

fn serve(
    config: &WorkerConfig,
    node: &NodeId,
    session: &Session,
    events: &Receiver<crate::proto::SessionEvent>,
    control: &Receiver<Control>,
) -> Result<WorkerExit, WorkerError> {
    let mut fsm = Worker::new(node.clone());
    let mut control = control.clone();
    session.send(&Message::hello(node.clone()))?;
    let report = profile_self(&config.profile, &config.catalog);
    for action in fsm.step(Event::ProfilingDone(report))? {
        if let WorkerAction::SendProfile(r) = action {
            session.send(&r.into())?;
        }
    }

    loop {
        select! {
            recv(control) -> c => {
                if c.is_err() {
                    // the controller went away; keep serving
                    control = never();
                    continue;
                }
                debug!("{node}: leaving on request");
                session.close();
                return Ok(WorkerExit::Disconnected);
            }
            recv(events) -> ev => {
                let Ok(ev) = ev else {
                    return Ok(WorkerExit::GatewayClosed(CloseReason::Local));
                };
                match ev.kind {
                    SessionEventKind::Closed(reason) => {
                        fsm.step(Event::NodeDisconnected(NodeId::from("gateway")))?;
                        return Ok(WorkerExit::GatewayClosed(reason));
                    }
                    SessionEventKind::Message(msg @ Message::Assign { .. }) => {
                        let order = msg.into_order(node).expect("assign");
                        let actions = fsm.step(Event::AssignmentReceived(order))?;
                        for action in actions {
                            let WorkerAction::RunInference(order) = action else { continue };
                            let cut = config
                                .fail
                                .filter(|p| p.request_id == order.request_id && order.images > 0)
                                .map(|p| ((p.fraction * order.images as f64).floor() as u64).min(order.images - 1));
                            let images = cut.unwrap_or(order.images);
                            let run = execute_paced(
                                &config.profile,
                                &config.catalog,
                                &order,
                                images,
                                config.time_scale,
                                || control.try_recv().is_ok(),
                            );
                            if run.interrupted {
                                session.close();
                                return Ok(WorkerExit::Disconnected);
                            }
                            let result = WorkResult {
                                request_id: order.request_id,
                                node_id: node.clone(),
                                images_done: run.images_done,
                                top5_correct: run.top5_correct,
                                elapsed_ms: (run.elapsed * 1000.0).round() as u64,
                            };
                            if cut.is_some() {
                                session.send(&result.into())?;
                                session.abort();
                                return Ok(WorkerExit::Failed {
                                    request_id: order.request_id,
                                    images_done: run.images_done,
                                });
                            }
                            for a in fsm.step(Event::LocalInferenceDone(result))? {
                                if let WorkerAction::SendResult(r) = a {
                                    session.send(&r.into())?;
                                }
                            }
                            fsm.step(Event::ResultSent)?;
                        }
                    }
                    SessionEventKind::Message(other) => {
                        warn!("{node}: ignoring unexpected {} message", other.type_name());
                    }
                }
            }
        }
    }
}
