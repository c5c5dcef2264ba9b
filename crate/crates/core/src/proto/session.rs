use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use crossbeam_channel::Sender;

use super::frame::{encode, FrameDecoder};
use super::transport::{ReadHalf, WriteHalf};
use super::{Message, ProtoError};

pub type ConnId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeartbeatConfig {
    pub interval: Duration,
    /// Consecutive unanswered pings after which the peer is declared gone.
    pub max_misses: u32,
}

impl Default for HeartbeatConfig {
    fn default() -> Self {
        Self { interval: Duration::from_millis(500), max_misses: 3 }
    }
}

impl HeartbeatConfig {
    /// Longest silence tolerated before a timeout.
    pub fn timeout(&self) -> Duration {
        self.interval * self.max_misses
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeartbeatAction {
    Idle,
    SendPing,
    TimedOut,
}

/// Ping schedule and miss counter. A ping is due every `interval`; a due
/// tick that finds the previous ping unanswered counts as a miss. Any
/// inbound message counts as an answer.
#[derive(Debug, Clone)]
pub struct HeartbeatMonitor {
    config: HeartbeatConfig,
    next_due: Option<Instant>,
    awaiting: bool,
    misses: u32,
}

impl HeartbeatMonitor {
    pub fn new(config: HeartbeatConfig) -> Self {
        Self { config, next_due: None, awaiting: false, misses: 0 }
    }

    pub fn poll(&mut self, now: Instant) -> HeartbeatAction {
        match self.next_due {
            Some(due) if now < due => HeartbeatAction::Idle,
            due => {
                if self.awaiting {
                    self.misses += 1;
                    if self.misses >= self.config.max_misses {
                        return HeartbeatAction::TimedOut;
                    }
                }
                let base = due.unwrap_or(now);
                self.next_due = Some(base + self.config.interval);
                self.awaiting = true;
                HeartbeatAction::SendPing
            }
        }
    }

    pub fn on_message(&mut self) {
        self.awaiting = false;
        self.misses = 0;
    }

    pub fn misses(&self) -> u32 {
        self.misses
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CloseReason {
    /// The peer closed the stream.
    PeerClosed,
    /// The peer said goodbye.
    Bye,
    HeartbeatTimeout,
    /// The peer sent something undecodable.
    Protocol(String),
    Io(String),
    /// Closed from this side.
    Local,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SessionEventKind {
    Message(Message),
    Closed(CloseReason),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionEvent {
    pub conn: ConnId,
    pub kind: SessionEventKind,
}

#[derive(Debug, Clone, Copy)]
pub struct SessionConfig {
    /// Ping the peer and watch for silence. Only the gateway side does this.
    pub heartbeat: Option<HeartbeatConfig>,
    /// Poll granularity of the reader thread.
    pub tick: Duration,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self { heartbeat: None, tick: Duration::from_millis(20) }
    }
}

impl SessionConfig {
    pub fn with_heartbeat(heartbeat: HeartbeatConfig) -> Self {
        Self { heartbeat: Some(heartbeat), ..Self::default() }
    }
}

/// Sending side of one connection. A reader thread turns inbound frames
/// into [`SessionEvent`]s, answers pings, and reports exactly one `Closed`.
#[derive(Clone)]
pub struct Session {
    conn: ConnId,
    writer: Arc<Mutex<Box<dyn WriteHalf>>>,
    closed: Arc<AtomicBool>,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("conn", &self.conn)
            .field("closed", &self.is_closed())
            .finish()
    }
}

impl Session {
    pub fn spawn(
        conn: ConnId,
        reader: impl ReadHalf,
        writer: impl WriteHalf,
        config: SessionConfig,
        events: Sender<SessionEvent>,
    ) -> (Session, JoinHandle<()>) {
        let session = Session {
            conn,
            writer: Arc::new(Mutex::new(Box::new(writer))),
            closed: Arc::new(AtomicBool::new(false)),
        };
        let inner = session.clone();
        let handle = thread::Builder::new()
            .name(format!("session-{conn}"))
            .spawn(move || inner.pump(reader, config, events))
            .expect("spawn session reader");
        (session, handle)
    }

    pub fn conn(&self) -> ConnId {
        self.conn
    }

    pub fn send(&self, msg: &Message) -> Result<(), ProtoError> {
        if self.is_closed() {
            return Err(ProtoError::Closed);
        }
        let bytes = encode(msg)?;
        let mut w = self.writer.lock().expect("writer lock");
        w.write_frame(&bytes).map_err(ProtoError::from)
    }

    /// Says goodbye and closes.
    pub fn close(&self) {
        if !self.is_closed() {
            let _ = self.send(&Message::Bye);
        }
        self.abort();
    }

    /// Closes without a goodbye, as a crashing peer would.
    pub fn abort(&self) {
        self.closed.store(true, Ordering::SeqCst);
        self.writer.lock().expect("writer lock").shutdown();
    }

    pub fn is_closed(&self) -> bool {
        self.closed.load(Ordering::SeqCst)
    }

    fn pump(&self, mut reader: impl ReadHalf, config: SessionConfig, events: Sender<SessionEvent>) {
        let mut monitor = config.heartbeat.map(HeartbeatMonitor::new);
        let mut decoder = FrameDecoder::new();
        let mut buf = vec![0u8; 64 * 1024];
        let emit = |kind| events.send(SessionEvent { conn: self.conn, kind }).is_ok();

        let reason = 'outer: loop {
            if self.is_closed() {
                break CloseReason::Local;
            }
            if let Some(m) = monitor.as_mut() {
                match m.poll(Instant::now()) {
                    HeartbeatAction::Idle => {}
                    HeartbeatAction::SendPing => {
                        if let Err(e) = self.send(&Message::Ping) {
                            break self.io_reason(e);
                        }
                    }
                    HeartbeatAction::TimedOut => break CloseReason::HeartbeatTimeout,
                }
            }
            let n = match reader.read_for(&mut buf, config.tick) {
                Ok(None) => continue,
                Ok(Some(0)) => {
                    break if self.is_closed() { CloseReason::Local } else { CloseReason::PeerClosed };
                }
                Ok(Some(n)) => n,
                Err(e) => break self.io_reason(e.into()),
            };
            decoder.push(&buf[..n]);
            loop {
                match decoder.next_message() {
                    Ok(None) => break,
                    Ok(Some(msg)) => {
                        if let Some(m) = monitor.as_mut() {
                            m.on_message();
                        }
                        match msg {
                            Message::Ping => {
                                if let Err(e) = self.send(&Message::Pong) {
                                    break 'outer self.io_reason(e);
                                }
                            }
                            Message::Pong => {}
                            Message::Bye => break 'outer CloseReason::Bye,
                            other => {
                                if !emit(SessionEventKind::Message(other)) {
                                    break 'outer CloseReason::Local;
                                }
                            }
                        }
                    }
                    Err(e) => {
                        if matches!(e, ProtoError::UnsupportedVersion { .. }) {
                            let _ = self.send(&Message::Bye);
                        }
                        break 'outer CloseReason::Protocol(e.to_string());
                    }
                }
            }
        };
        self.abort();
        emit(SessionEventKind::Closed(reason));
    }

    fn io_reason(&self, e: ProtoError) -> CloseReason {
        if self.is_closed() {
            CloseReason::Local
        } else {
            CloseReason::Io(e.to_string())
        }
    }
}
