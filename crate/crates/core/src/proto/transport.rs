//! Byte-stream halves a [`super::Session`] runs over: TCP sockets, or an
//! in-process pipe built on channels for tests and single-process clusters.

use std::io::{self, Read, Write};
use std::net::{Shutdown, TcpStream};
use std::time::Duration;

use crossbeam_channel::{Receiver, RecvTimeoutError, Sender};

pub const DEFAULT_PORT: u16 = 7707;

pub trait ReadHalf: Send + 'static {
    /// Reads available bytes, waiting at most `timeout`. `Ok(None)` means
    /// nothing arrived in time; `Ok(Some(0))` means the peer closed.
    fn read_for(&mut self, buf: &mut [u8], timeout: Duration) -> io::Result<Option<usize>>;
}

pub trait WriteHalf: Send + 'static {
    fn write_frame(&mut self, bytes: &[u8]) -> io::Result<()>;
    /// Closes the stream in both directions.
    fn shutdown(&mut self);
}

pub struct TcpReadHalf {
    stream: TcpStream,
    timeout: Option<Duration>,
}

pub struct TcpWriteHalf {
    stream: TcpStream,
}

pub fn tcp_halves(stream: TcpStream) -> io::Result<(TcpReadHalf, TcpWriteHalf)> {
    stream.set_nodelay(true)?;
    let writer = stream.try_clone()?;
    Ok((TcpReadHalf { stream, timeout: None }, TcpWriteHalf { stream: writer }))
}

impl ReadHalf for TcpReadHalf {
    fn read_for(&mut self, buf: &mut [u8], timeout: Duration) -> io::Result<Option<usize>> {
        if self.timeout != Some(timeout) {
            self.stream.set_read_timeout(Some(timeout))?;
            self.timeout = Some(timeout);
        }
        match self.stream.read(buf) {
            Ok(n) => Ok(Some(n)),
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => Ok(None),
            Err(e) if e.kind() == io::ErrorKind::Interrupted => Ok(None),
            Err(e) if e.kind() == io::ErrorKind::ConnectionReset => Ok(Some(0)),
            Err(e) => Err(e),
        }
    }
}

impl WriteHalf for TcpWriteHalf {
    fn write_frame(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.stream.write_all(bytes)?;
        self.stream.flush()
    }

    fn shutdown(&mut self) {
        let _ = self.stream.shutdown(Shutdown::Both);
    }
}

pub struct PipeReader {
    rx: Receiver<Vec<u8>>,
    pending: Vec<u8>,
    pos: usize,
}

pub struct PipeWriter {
    tx: Option<Sender<Vec<u8>>>,
}

/// One-directional in-process byte pipe.
pub fn pipe() -> (PipeWriter, PipeReader) {
    let (tx, rx) = crossbeam_channel::unbounded();
    (PipeWriter { tx: Some(tx) }, PipeReader { rx, pending: Vec::new(), pos: 0 })
}

/// Two connected endpoints, each a (reader, writer) pair.
pub fn duplex() -> ((PipeReader, PipeWriter), (PipeReader, PipeWriter)) {
    let (a_tx, b_rx) = pipe();
    let (b_tx, a_rx) = pipe();
    ((a_rx, a_tx), (b_rx, b_tx))
}

impl ReadHalf for PipeReader {
    fn read_for(&mut self, buf: &mut [u8], timeout: Duration) -> io::Result<Option<usize>> {
        if self.pos == self.pending.len() {
            match self.rx.recv_timeout(timeout) {
                Ok(chunk) => {
                    self.pending = chunk;
                    self.pos = 0;
                }
                Err(RecvTimeoutError::Timeout) => return Ok(None),
                Err(RecvTimeoutError::Disconnected) => return Ok(Some(0)),
            }
        }
        let n = (self.pending.len() - self.pos).min(buf.len());
        buf[..n].copy_from_slice(&self.pending[self.pos..self.pos + n]);
        self.pos += n;
        Ok(Some(n))
    }
}

impl WriteHalf for PipeWriter {
    fn write_frame(&mut self, bytes: &[u8]) -> io::Result<()> {
        match &self.tx {
            Some(tx) if !bytes.is_empty() => tx
                .send(bytes.to_vec())
                .map_err(|_| io::Error::new(io::ErrorKind::BrokenPipe, "pipe closed")),
            Some(_) => Ok(()),
            None => Err(io::Error::new(io::ErrorKind::BrokenPipe, "pipe closed")),
        }
    }

    fn shutdown(&mut self) {
        self.tx = None;
    }
}
