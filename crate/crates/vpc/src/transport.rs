//! Byte transports for the wire protocol and the per-connection runtime:
//! a writer thread fed through an ordered queue, polled reads, handshake
//! and ACK bookkeeping.

use std::collections::{BTreeMap, VecDeque};
use std::io::{self, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;
use vpc_core::wire::{encode, ErrorPayload, Inbound, Link, MsgType, Role, WireError, WireMessage};

/// Reads with a deadline.
pub trait ByteReader: Send {
    /// `Ok(None)` when nothing arrived in time, `Ok(Some(0))` at end of stream.
    fn read_for(&mut self, buf: &mut [u8], timeout: Duration) -> io::Result<Option<usize>>;
}

impl ByteReader for TcpStream {
    fn read_for(&mut self, buf: &mut [u8], timeout: Duration) -> io::Result<Option<usize>> {
        // A zero timeout means blocking to the socket API.
        self.set_read_timeout(Some(timeout.max(Duration::from_millis(1))))?;
        match self.read(buf) {
            Ok(n) => Ok(Some(n)),
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

/// Receiving half of an in-memory pipe.
#[derive(Debug)]
pub struct MemReader {
    rx: Receiver<Vec<u8>>,
    pending: Vec<u8>,
    pos: usize,
}

impl ByteReader for MemReader {
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
        let n = buf.len().min(self.pending.len() - self.pos);
        buf[..n].copy_from_slice(&self.pending[self.pos..self.pos + n]);
        self.pos += n;
        Ok(Some(n))
    }
}

/// Sending half of an in-memory pipe.
#[derive(Debug, Clone)]
pub struct MemWriter {
    tx: Sender<Vec<u8>>,
}

impl Write for MemWriter {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.tx.send(buf.to_vec()).map_err(|_| io::Error::from(io::ErrorKind::BrokenPipe))?;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Both directions of one connection end.
pub struct Endpoint {
    pub reader: Box<dyn ByteReader>,
    pub writer: Box<dyn Write + Send>,
}

impl Endpoint {
    pub fn tcp(stream: TcpStream) -> io::Result<Self> {
        stream.set_nodelay(true)?;
        let writer = stream.try_clone()?;
        Ok(Self { reader: Box::new(stream), writer: Box::new(writer) })
    }
}

/// Two connected endpoints backed by channels.
pub fn loopback() -> (Endpoint, Endpoint) {
    let (tx_a, rx_b) = mpsc::channel();
    let (tx_b, rx_a) = mpsc::channel();
    let end = |rx, tx| Endpoint {
        reader: Box::new(MemReader { rx, pending: Vec::new(), pos: 0 }),
        writer: Box::new(MemWriter { tx }),
    };
    (end(rx_a, tx_a), end(rx_b, tx_b))
}

/// Connects, retrying until `patience` runs out.
pub fn connect_tcp(addr: &str, patience: Duration) -> io::Result<TcpStream> {
    let deadline = Instant::now() + patience;
    loop {
        let attempt = addr
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "address resolves to nothing"))
            .and_then(|a| TcpStream::connect_timeout(&a, Duration::from_secs(1)));
        match attempt {
            Ok(s) => return Ok(s),
            Err(e) if Instant::now() >= deadline => return Err(e),
            Err(_) => thread::sleep(Duration::from_millis(50)),
        }
    }
}

/// Milliseconds since an origin instant.
#[derive(Debug, Clone, Copy)]
pub struct Clock {
    origin: Instant,
}

impl Clock {
    pub fn new() -> Self {
        Self { origin: Instant::now() }
    }

    pub fn now_ms(&self) -> u64 {
        self.origin.elapsed().as_millis() as u64
    }
}

impl Default for Clock {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Default)]
struct OutState {
    queue: VecDeque<(MsgType, Vec<u8>)>,
    closed: bool,
    error: Option<String>,
}

/// Writer context. GAZE_TICKs waiting behind a stalled link are coalesced,
/// newest wins; everything else is queued in order.
struct Outbox {
    shared: Arc<(Mutex<OutState>, Condvar)>,
    thread: Option<JoinHandle<()>>,
}

impl Outbox {
    fn new(mut writer: Box<dyn Write + Send>) -> Self {
        let shared = Arc::new((Mutex::new(OutState::default()), Condvar::new()));
        let s = Arc::clone(&shared);
        let thread = thread::spawn(move || {
            let (lock, cv) = &*s;
            loop {
                let item = {
                    let mut st = lock.lock().unwrap();
                    loop {
                        if let Some(item) = st.queue.pop_front() {
                            break Some(item);
                        }
                        if st.closed {
                            break None;
                        }
                        st = cv.wait(st).unwrap();
                    }
                };
                let Some((_, bytes)) = item else { return };
                if let Err(e) = writer.write_all(&bytes).and_then(|_| writer.flush()) {
                    let mut st = lock.lock().unwrap();
                    st.error = Some(e.to_string());
                    st.closed = true;
                    st.queue.clear();
                    return;
                }
            }
        });
        Self { shared, thread: Some(thread) }
    }

    /// Queues a frame; returns true when it replaced a pending tick.
    fn push(&self, kind: MsgType, bytes: Vec<u8>) -> Result<bool, String> {
        let (lock, cv) = &*self.shared;
        let mut st = lock.lock().unwrap();
        if let Some(e) = &st.error {
            return Err(e.clone());
        }
        if st.closed {
            return Err("connection closed".into());
        }
        let replaced = match st.queue.back_mut() {
            Some(last) if kind.droppable() && last.0.droppable() => {
                last.1 = bytes;
                true
            }
            _ => {
                st.queue.push_back((kind, bytes));
                false
            }
        };
        cv.notify_one();
        Ok(replaced)
    }

    fn close(&mut self) {
        {
            let (lock, cv) = &*self.shared;
            lock.lock().unwrap().closed = true;
            cv.notify_one();
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for Outbox {
    fn drop(&mut self) {
        self.close();
    }
}

#[derive(Debug, Error)]
pub enum ConnError {
    #[error("connection lost: {0}")]
    Lost(String),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("no ACK for message {seq} within {waited_ms} ms")]
    AckTimeout { seq: u64, waited_ms: u64 },
    #[error("timed out waiting for {0}")]
    Timeout(&'static str),
    #[error("peer reported {}: {}", .0.code, .0.message)]
    Peer(ErrorPayload),
}

impl From<io::Error> for ConnError {
    fn from(e: io::Error) -> Self {
        ConnError::Lost(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Ack { seq: u64, kind: Option<MsgType> },
    Message(WireMessage),
}

/// One side of a protocol connection.
pub struct Connection {
    link: Link,
    reader: Box<dyn ByteReader>,
    buf: Vec<u8>,
    outbox: Outbox,
    clock: Clock,
    sent_at: BTreeMap<u64, u64>,
    stash: VecDeque<WireMessage>,
    ack_timeout_ms: u64,
    dropped_ticks: u64,
}

impl Connection {
    pub fn new(role: Role, endpoint: Endpoint, clock: Clock) -> Self {
        Self {
            link: Link::new(role),
            reader: endpoint.reader,
            buf: Vec::new(),
            outbox: Outbox::new(endpoint.writer),
            clock,
            sent_at: BTreeMap::new(),
            stash: VecDeque::new(),
            ack_timeout_ms: 30_000,
            dropped_ticks: 0,
        }
    }

    pub fn with_ack_timeout(mut self, ms: u64) -> Self {
        self.ack_timeout_ms = ms;
        self
    }

    pub fn link(&self) -> &Link {
        &self.link
    }

    pub fn now_ms(&self) -> u64 {
        self.clock.now_ms()
    }

    /// Ticks coalesced away on a slow link.
    pub fn dropped_ticks(&self) -> u64 {
        self.dropped_ticks
    }

    fn push_frame(&mut self, msg: &WireMessage) -> Result<(), ConnError> {
        let bytes = encode(msg)?;
        let replaced = self.outbox.push(msg.kind, bytes).map_err(ConnError::Lost)?;
        if replaced {
            self.dropped_ticks += 1;
            // The replaced tick is the newest outstanding tick before this one.
            let older = self
                .link
                .outstanding()
                .filter(|&(s, k)| k == MsgType::GazeTick && s < msg.seq)
                .map(|(s, _)| s)
                .last();
            if let Some(s) = older {
                self.link.forget(s);
                self.sent_at.remove(&s);
            }
        }
        Ok(())
    }

    /// Sends a message and returns its sequence number.
    pub fn send<P: Serialize>(&mut self, kind: MsgType, payload: &P) -> Result<u64, ConnError> {
        let now = self.now_ms();
        let msg = self.link.message(kind, now, payload);
        if kind != MsgType::Ack {
            self.sent_at.insert(msg.seq, now);
        }
        self.push_frame(&msg)?;
        Ok(msg.seq)
    }

    pub fn ack(&mut self, of: &WireMessage) -> Result<(), ConnError> {
        let now = self.now_ms();
        let msg = self.link.ack(of, now);
        self.push_frame(&msg)
    }

    pub fn send_error(&mut self, payload: &ErrorPayload) -> Result<u64, ConnError> {
        self.send(MsgType::Error, payload)
    }

    fn check_acks(&self) -> Result<(), ConnError> {
        let now = self.now_ms();
        match self.sent_at.iter().next() {
            Some((&seq, &t)) if now.saturating_sub(t) > self.ack_timeout_ms => {
                Err(ConnError::AckTimeout { seq, waited_ms: now - t })
            }
            _ => Ok(()),
        }
    }

    /// Next event within `timeout`. HELLOs are answered here; protocol
    /// violations are reported to the peer and end the connection.
    pub fn recv(&mut self, timeout: Duration) -> Result<Option<Event>, ConnError> {
        if let Some(m) = self.stash.pop_front() {
            return Ok(Some(Event::Message(m)));
        }
        let deadline = Instant::now() + timeout;
        loop {
            self.check_acks()?;
            match self.link.decode(&self.buf) {
                Ok((msg, rest)) => {
                    let used = self.buf.len() - rest.len();
                    self.buf.drain(..used);
                    let now = self.now_ms();
                    match self.link.receive(msg, now) {
                        Ok(Inbound::Hello(ack)) => self.push_frame(&ack)?,
                        Ok(Inbound::Acked { seq, kind }) => {
                            self.sent_at.remove(&seq);
                            return Ok(Some(Event::Ack { seq, kind }));
                        }
                        Ok(Inbound::Message(m)) => {
                            if m.kind == MsgType::Error {
                                if let Ok(p) = m.payload_as::<ErrorPayload>() {
                                    if p.chunk_index.is_none() {
                                        return Err(ConnError::Peer(p));
                                    }
                                }
                            }
                            return Ok(Some(Event::Message(m)));
                        }
                        Err(e) => return Err(self.violation(e)),
                    }
                }
                Err(WireError::NeedMoreBytes { .. }) => {
                    let left = deadline.saturating_duration_since(Instant::now());
                    let mut chunk = [0u8; 64 * 1024];
                    match self.reader.read_for(&mut chunk, left)? {
                        None => return Ok(None),
                        Some(0) => return Err(ConnError::Lost("peer closed the connection".into())),
                        Some(n) => self.buf.extend_from_slice(&chunk[..n]),
                    }
                }
                Err(e) => return Err(self.violation(e)),
            }
        }
    }

    fn violation(&mut self, e: WireError) -> ConnError {
        let code = match e {
            WireError::VersionMismatch(_) => "version",
            _ => "protocol",
        };
        let now = self.now_ms();
        let msg = self.link.message(MsgType::Error, now, &ErrorPayload::new(code, &e.to_string()));
        let _ = self.push_frame(&msg);
        ConnError::Wire(e)
    }

    /// Exchanges HELLOs and waits until our HELLO is acknowledged.
    pub fn handshake(&mut self, timeout: Duration) -> Result<(), ConnError> {
        let now = self.now_ms();
        let hello = self.link.hello(now);
        self.sent_at.insert(hello.seq, now);
        self.push_frame(&hello)?;
        let deadline = Instant::now() + timeout;
        loop {
            let acked = !self.sent_at.contains_key(&hello.seq);
            if acked && self.link.is_ready() {
                return Ok(());
            }
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Err(ConnError::Timeout("HELLO"));
            }
            if let Some(Event::Message(m)) = self.recv(left)? {
                self.stash.push_back(m);
            }
        }
    }

    /// Waits for the ACK of `seq`. Other messages arriving meanwhile are
    /// returned first so the caller can react to them.
    pub fn wait_ack(&mut self, seq: u64, timeout: Duration) -> Result<Option<WireMessage>, ConnError> {
        let deadline = Instant::now() + timeout;
        while self.sent_at.contains_key(&seq) {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Err(ConnError::Timeout("ACK"));
            }
            if let Some(Event::Message(m)) = self.recv(left)? {
                return Ok(Some(m));
            }
        }
        Ok(None)
    }

    /// Waits for the next message, skipping ACKs.
    pub fn next_message(&mut self, timeout: Duration, what: &'static str) -> Result<WireMessage, ConnError> {
        let deadline = Instant::now() + timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Err(ConnError::Timeout(what));
            }
            if let Some(Event::Message(m)) = self.recv(left)? {
                return Ok(m);
            }
        }
    }

    /// Flushes queued messages and stops the writer.
    pub fn close(mut self) {
        self.outbox.close();
    }
}
