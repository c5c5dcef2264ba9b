use std::fmt;

use super::event::{Event, ProfileReport, WorkOrder};
use super::FsmError;
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WorkerState {
    Profile,
    NetCom,
    Inference,
}

impl WorkerState {
    pub const ALL: [WorkerState; 3] = [WorkerState::Profile, WorkerState::NetCom, WorkerState::Inference];

    pub fn name(self) -> &'static str {
        match self {
            WorkerState::Profile => "Profile",
            WorkerState::NetCom => "NetCom",
            WorkerState::Inference => "Inference",
        }
    }
}

impl fmt::Display for WorkerState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WorkerAction {
    SendProfile(ProfileReport),
    RunInference(WorkOrder),
    SendResult(super::WorkResult),
    /// The gateway is gone; stop.
    Shutdown,
}

/// Local resource manager of a worker node: profile, report, then serve one
/// work order at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct Worker {
    state: WorkerState,
    node_id: NodeId,
    profile: Option<ProfileReport>,
    current: Option<WorkOrder>,
    result_pending: bool,
}

pub fn worker_step(worker: &Worker, event: Event) -> Result<(Worker, Vec<WorkerAction>), FsmError> {
    let mut next = worker.clone();
    let actions = next.apply(event)?;
    Ok((next, actions))
}

impl Worker {
    pub fn new(node_id: NodeId) -> Self {
        Self {
            state: WorkerState::Profile,
            node_id,
            profile: None,
            current: None,
            result_pending: false,
        }
    }

    pub fn state(&self) -> WorkerState {
        self.state
    }

    pub fn node_id(&self) -> &NodeId {
        &self.node_id
    }

    pub fn profile(&self) -> Option<&ProfileReport> {
        self.profile.as_ref()
    }

    pub fn current(&self) -> Option<&WorkOrder> {
        self.current.as_ref()
    }

    pub fn step(&mut self, event: Event) -> Result<Vec<WorkerAction>, FsmError> {
        let (next, actions) = worker_step(self, event)?;
        *self = next;
        Ok(actions)
    }

    fn apply(&mut self, event: Event) -> Result<Vec<WorkerAction>, FsmError> {
        use WorkerState::*;
        match (self.state, event) {
            (Profile, Event::ProfilingDone(report)) => {
                if report.node_id != self.node_id {
                    return Err(FsmError::InvalidProfile {
                        node: report.node_id,
                        reason: format!("worker is `{}`", self.node_id),
                    });
                }
                self.profile = Some(report.clone());
                self.state = NetCom;
                Ok(vec![WorkerAction::SendProfile(report)])
            }
            (NetCom, Event::AssignmentReceived(order)) => {
                if order.node_id != self.node_id {
                    return Err(FsmError::InvalidAssignment(format!(
                        "order for `{}` delivered to `{}`",
                        order.node_id, self.node_id
                    )));
                }
                let levels = self.profile.as_ref().map_or(0, |p| p.perf_column.len());
                if order.level >= levels {
                    return Err(FsmError::InvalidAssignment(format!(
                        "level {} out of range for {levels} levels",
                        order.level
                    )));
                }
                self.current = Some(order.clone());
                self.state = Inference;
                Ok(vec![WorkerAction::RunInference(order)])
            }
            (Inference, Event::LocalInferenceDone(result)) if !self.result_pending => {
                let order = self.current.as_ref().expect("set on entry to Inference");
                if result.request_id != order.request_id
                    || result.node_id != self.node_id
                    || result.images_done > order.images
                {
                    return Err(FsmError::UnexpectedResult {
                        node: result.node_id,
                        request_id: result.request_id,
                    });
                }
                self.result_pending = true;
                Ok(vec![WorkerAction::SendResult(result)])
            }
            (Inference, Event::ResultSent) if self.result_pending => {
                self.result_pending = false;
                self.current = None;
                self.state = NetCom;
                Ok(vec![])
            }
            (_, Event::NodeDisconnected(_)) => Ok(vec![WorkerAction::Shutdown]),
            (state, event) => Err(FsmError::ProtocolViolation { state: state.name(), event: event.tag() }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{EventTag, WorkResult};
    use super::*;

    fn profiled() -> Worker {
        let mut w = Worker::new("w".into());
        let a = w
            .step(Event::ProfilingDone(ProfileReport {
                node_id: "w".into(),
                perf_column: vec![1.0, 2.0],
                acc: vec![0.9, 0.8],
            }))
            .unwrap();
        assert!(matches!(a[..], [WorkerAction::SendProfile(_)]));
        w
    }

    fn order() -> WorkOrder {
        WorkOrder { request_id: 3, node_id: "w".into(), images: 5, level: 1, seed: 9 }
    }

    #[test]
    fn serve_one_order() {
        let mut w = profiled();
        assert_eq!(w.state(), WorkerState::NetCom);
        let a = w.step(Event::AssignmentReceived(order())).unwrap();
        assert_eq!(a, vec![WorkerAction::RunInference(order())]);
        assert_eq!(w.state(), WorkerState::Inference);
        let result = WorkResult {
            request_id: 3,
            node_id: "w".into(),
            images_done: 5,
            top5_correct: 4,
            elapsed_ms: 2500,
        };
        let a = w.step(Event::LocalInferenceDone(result.clone())).unwrap();
        assert_eq!(a, vec![WorkerAction::SendResult(result)]);
        assert_eq!(w.state(), WorkerState::Inference);
        w.step(Event::ResultSent).unwrap();
        assert_eq!(w.state(), WorkerState::NetCom);
    }

    #[test]
    fn second_assignment_during_inference_is_rejected() {
        let mut w = profiled();
        w.step(Event::AssignmentReceived(order())).unwrap();
        let err = w.step(Event::AssignmentReceived(order())).unwrap_err();
        assert_eq!(
            err,
            FsmError::ProtocolViolation { state: "Inference", event: EventTag::AssignmentReceived }
        );
        assert_eq!(w.current(), Some(&order()));
    }

    #[test]
    fn rejects_foreign_or_out_of_range_orders() {
        let mut w = profiled();
        let mut o = order();
        o.node_id = "other".into();
        assert!(w.step(Event::AssignmentReceived(o)).is_err());
        let mut o = order();
        o.level = 2;
        assert!(w.step(Event::AssignmentReceived(o)).is_err());
        assert_eq!(w.state(), WorkerState::NetCom);
    }
}
