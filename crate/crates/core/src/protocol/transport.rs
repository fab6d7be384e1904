//! Duplex byte channels carrying frames between roles.
//!
//! [`SharedBuffer`] is a pair of single-producer/single-consumer rings in
//! process memory, standing in for unencrypted pages mapped into both the
//! enclave and the host. [`Loopback`] is a TCP connection on 127.0.0.1.

use std::cell::UnsafeCell;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::{Ipv4Addr, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{fence, AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use thiserror::Error;

use super::frame::{Frame, FrameError, HEADER_BYTES};

pub const DEFAULT_SHM_CAPACITY: usize = 4 << 20;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("peer closed the channel")]
    Closed,
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// Reliable, ordered byte channel with frame helpers.
pub trait Transport: Send {
    fn send_bytes(&mut self, bytes: &[u8]) -> Result<(), TransportError>;
    fn recv_exact(&mut self, buf: &mut [u8]) -> Result<(), TransportError>;
    fn flush(&mut self) -> Result<(), TransportError> {
        Ok(())
    }

    /// Sends one frame and returns the number of bytes written.
    fn send_frame(&mut self, frame: &Frame) -> Result<usize, TransportError> {
        self.send_bytes(&frame.header())?;
        self.send_bytes(&frame.payload)?;
        self.flush()?;
        Ok(frame.encoded_len())
    }

    fn recv_frame(&mut self) -> Result<Frame, TransportError> {
        let mut header = [0u8; HEADER_BYTES];
        self.recv_exact(&mut header)?;
        let (kind, len) = Frame::parse_header(&header)?;
        let mut payload = vec![0u8; len];
        self.recv_exact(&mut payload)?;
        Ok(Frame::new(kind, payload))
    }
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn send_bytes(&mut self, bytes: &[u8]) -> Result<(), TransportError> {
        (**self).send_bytes(bytes)
    }
    fn recv_exact(&mut self, buf: &mut [u8]) -> Result<(), TransportError> {
        (**self).recv_exact(buf)
    }
    fn flush(&mut self) -> Result<(), TransportError> {
        (**self).flush()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransportKind {
    SharedBuffer,
    Loopback,
}

impl TransportKind {
    pub fn name(self) -> &'static str {
        match self {
            TransportKind::SharedBuffer => "shm",
            TransportKind::Loopback => "loopback",
        }
    }
}

impl std::str::FromStr for TransportKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "shm" | "shared" | "shared-buffer" => Ok(TransportKind::SharedBuffer),
            "loopback" | "tcp" => Ok(TransportKind::Loopback),
            other => Err(format!(
                "unknown transport `{other}` (expected shm or loopback)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransportConfig {
    pub kind: TransportKind,
    pub shm_capacity: usize,
    /// 0 picks an ephemeral port.
    pub loopback_port: u16,
}

impl TransportConfig {
    pub fn new(kind: TransportKind) -> Self {
        TransportConfig {
            kind,
            shm_capacity: DEFAULT_SHM_CAPACITY,
            loopback_port: 0,
        }
    }
}

pub type TransportPair = (Box<dyn Transport>, Box<dyn Transport>);

/// Two connected endpoints of the configured kind.
pub fn connect_pair(cfg: &TransportConfig) -> Result<TransportPair, TransportError> {
    Ok(match cfg.kind {
        TransportKind::SharedBuffer => {
            let (a, b) = SharedBuffer::pair(cfg.shm_capacity);
            (Box::new(a), Box::new(b))
        }
        TransportKind::Loopback => {
            let (a, b) = Loopback::pair(cfg.loopback_port)?;
            (Box::new(a), Box::new(b))
        }
    })
}

// ---- shared buffer ----

const SPINS: usize = 64;
const YIELDS: usize = 16;
/// Upper bound on one sleep; wakeups are normally explicit.
const PARK: Duration = Duration::from_millis(50);

/// SPSC byte ring. `head` and `tail` are monotonically increasing byte
/// counters; the slot for counter `i` is `i % capacity`.
struct Ring {
    buf: Box<[UnsafeCell<u8>]>,
    head: AtomicUsize,
    tail: AtomicUsize,
    closed: AtomicBool,
    sleepers: AtomicUsize,
    /// Busy-wait iterations before yielding; zero on a single CPU.
    spins: usize,
    lock: Mutex<()>,
    cond: Condvar,
}

// The producer only writes slots in [tail, head + cap) and the consumer only
// reads slots in [head, tail); the counters are published with
// release/acquire, so the two sides never touch the same byte concurrently.
unsafe impl Sync for Ring {}
unsafe impl Send for Ring {}

impl Ring {
    fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "ring capacity must be positive");
        let buf: Box<[UnsafeCell<u8>]> = (0..capacity).map(|_| UnsafeCell::new(0)).collect();
        // fault the pages in now rather than during the first transfer
        for i in (0..capacity).step_by(4096) {
            // SAFETY: in bounds, and no other reference to `buf` exists yet
            unsafe { std::ptr::write_volatile(buf[i].get(), 0) };
        }
        Ring {
            buf,
            head: AtomicUsize::new(0),
            tail: AtomicUsize::new(0),
            closed: AtomicBool::new(false),
            sleepers: AtomicUsize::new(0),
            spins: match std::thread::available_parallelism() {
                Ok(n) if n.get() > 1 => SPINS,
                _ => 0,
            },
            lock: Mutex::new(()),
            cond: Condvar::new(),
        }
    }

    fn cap(&self) -> usize {
        self.buf.len()
    }

    fn base(&self) -> *mut u8 {
        self.buf.as_ptr() as *mut u8
    }

    fn wake(&self) {
        // pairs with the fence in `wait`: either the sleeper sees the new
        // counter or we see the sleeper
        fence(Ordering::SeqCst);
        if self.sleepers.load(Ordering::SeqCst) > 0 {
            let _g = self.lock.lock().unwrap();
            self.cond.notify_all();
        }
    }

    fn close(&self) {
        self.closed.store(true, Ordering::SeqCst);
        let _g = self.lock.lock().unwrap();
        self.cond.notify_all();
    }

    /// Blocks until `ready()` holds or the ring is closed.
    fn wait(&self, ready: impl Fn() -> bool) {
        for _ in 0..self.spins {
            if ready() || self.closed.load(Ordering::Acquire) {
                return;
            }
            std::hint::spin_loop();
        }
        for _ in 0..YIELDS {
            if ready() || self.closed.load(Ordering::Acquire) {
                return;
            }
            std::thread::yield_now();
        }
        self.sleepers.fetch_add(1, Ordering::SeqCst);
        fence(Ordering::SeqCst);
        let mut g = self.lock.lock().unwrap();
        while !ready() && !self.closed.load(Ordering::Acquire) {
            g = self.cond.wait_timeout(g, PARK).unwrap().0;
        }
        drop(g);
        self.sleepers.fetch_sub(1, Ordering::SeqCst);
    }

    fn write(&self, mut data: &[u8]) -> Result<(), TransportError> {
        let cap = self.cap();
        while !data.is_empty() {
            let tail = self.tail.load(Ordering::Relaxed);
            self.wait(|| tail - self.head.load(Ordering::Acquire) < cap);
            if self.closed.load(Ordering::Acquire) {
                return Err(TransportError::Closed);
            }
            let free = cap - (tail - self.head.load(Ordering::Acquire));
            let n = free.min(data.len());
            let start = tail % cap;
            let first = n.min(cap - start);
            // SAFETY: slots [tail, tail + n) are free (see the Sync impl).
            unsafe {
                std::ptr::copy_nonoverlapping(data.as_ptr(), self.base().add(start), first);
                std::ptr::copy_nonoverlapping(data.as_ptr().add(first), self.base(), n - first);
            }
            self.tail.store(tail + n, Ordering::Release);
            self.wake();
            data = &data[n..];
        }
        Ok(())
    }

    fn read(&self, mut out: &mut [u8]) -> Result<(), TransportError> {
        let cap = self.cap();
        while !out.is_empty() {
            let head = self.head.load(Ordering::Relaxed);
            self.wait(|| self.tail.load(Ordering::Acquire) > head);
            let avail = self.tail.load(Ordering::Acquire) - head;
            if avail == 0 {
                return Err(TransportError::Closed);
            }
            let n = avail.min(out.len());
            let start = head % cap;
            let first = n.min(cap - start);
            // SAFETY: slots [head, head + n) were published by the producer.
            unsafe {
                std::ptr::copy_nonoverlapping(self.base().add(start), out.as_mut_ptr(), first);
                std::ptr::copy_nonoverlapping(self.base(), out.as_mut_ptr().add(first), n - first);
            }
            self.head.store(head + n, Ordering::Release);
            self.wake();
            out = &mut out[n..];
        }
        Ok(())
    }
}

/// One endpoint of an in-process shared-memory channel.
pub struct SharedBuffer {
    tx: Arc<Ring>,
    rx: Arc<Ring>,
}

impl SharedBuffer {
    /// Connected endpoints whose rings each hold `capacity` bytes.
    pub fn pair(capacity: usize) -> (SharedBuffer, SharedBuffer) {
        let a = Arc::new(Ring::new(capacity));
        let b = Arc::new(Ring::new(capacity));
        (
            SharedBuffer {
                tx: a.clone(),
                rx: b.clone(),
            },
            SharedBuffer { tx: b, rx: a },
        )
    }

    pub fn capacity(&self) -> usize {
        self.tx.cap()
    }
}

impl Drop for SharedBuffer {
    fn drop(&mut self) {
        self.tx.close();
        self.rx.close();
    }
}

impl Transport for SharedBuffer {
    fn send_bytes(&mut self, bytes: &[u8]) -> Result<(), TransportError> {
        self.tx.write(bytes)
    }

    fn recv_exact(&mut self, buf: &mut [u8]) -> Result<(), TransportError> {
        self.rx.read(buf)
    }
}

// ---- loopback ----

pub struct Loopback {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl Loopback {
    pub fn from_stream(stream: TcpStream) -> io::Result<Self> {
        stream.set_nodelay(true)?;
        let reader = BufReader::with_capacity(1 << 16, stream.try_clone()?);
        Ok(Loopback {
            reader,
            writer: BufWriter::with_capacity(1 << 16, stream),
        })
    }

    pub fn listen(port: u16) -> io::Result<TcpListener> {
        TcpListener::bind((Ipv4Addr::LOCALHOST, port))
    }

    pub fn connect(addr: SocketAddr) -> io::Result<Self> {
        Loopback::from_stream(TcpStream::connect(addr)?)
    }

    /// Connected endpoints over a fresh listener on `port` (0 = ephemeral).
    pub fn pair(port: u16) -> io::Result<(Loopback, Loopback)> {
        let listener = Loopback::listen(port)?;
        let client = TcpStream::connect(listener.local_addr()?)?;
        let (server, _) = listener.accept()?;
        Ok((
            Loopback::from_stream(server)?,
            Loopback::from_stream(client)?,
        ))
    }
}

fn map_eof(e: io::Error) -> TransportError {
    match e.kind() {
        io::ErrorKind::UnexpectedEof
        | io::ErrorKind::BrokenPipe
        | io::ErrorKind::ConnectionReset
        | io::ErrorKind::ConnectionAborted => TransportError::Closed,
        _ => TransportError::Io(e),
    }
}

impl Transport for Loopback {
    fn send_bytes(&mut self, bytes: &[u8]) -> Result<(), TransportError> {
        self.writer.write_all(bytes).map_err(map_eof)
    }

    fn recv_exact(&mut self, buf: &mut [u8]) -> Result<(), TransportError> {
        self.reader.read_exact(buf).map_err(map_eof)
    }

    fn flush(&mut self) -> Result<(), TransportError> {
        self.writer.flush().map_err(map_eof)
    }
}

#[cfg(test)]
mod tests {
    use super::super::frame::MessageType;
    use super::*;
    use std::thread;

    fn exchange(a: &mut dyn Transport, b: Box<dyn Transport>, payload_len: usize) {
        let payload: Vec<u8> = (0..payload_len).map(|i| (i * 31 % 251) as u8).collect();
        let expected = payload.clone();
        let echo = thread::spawn(move || {
            let mut b = b;
            let f = b.recv_frame().unwrap();
            b.send_frame(&f).unwrap();
        });
        let sent = a
            .send_frame(&Frame::new(MessageType::GarbledTables, payload))
            .unwrap();
        assert_eq!(sent, payload_len + HEADER_BYTES);
        let back = a.recv_frame().unwrap();
        assert_eq!(back.payload, expected);
        echo.join().unwrap();
    }

    #[test]
    fn shared_buffer_wraps_around_small_ring() {
        let (mut a, b) = SharedBuffer::pair(37);
        exchange(&mut a, Box::new(b), 10_000);
    }

    #[test]
    fn shared_buffer_large_payload() {
        let (mut a, b) = SharedBuffer::pair(DEFAULT_SHM_CAPACITY);
        exchange(&mut a, Box::new(b), 9 << 20);
    }

    #[test]
    fn loopback_echo() {
        let (mut a, b) = Loopback::pair(0).unwrap();
        exchange(&mut a, Box::new(b), 1 << 20);
    }

    #[test]
    fn closed_peer_is_reported() {
        let (mut a, b) = SharedBuffer::pair(16);
        drop(b);
        assert!(matches!(a.recv_frame(), Err(TransportError::Closed)));
        assert!(matches!(
            a.send_bytes(&[0; 64]),
            Err(TransportError::Closed)
        ));

        let (mut a, b) = Loopback::pair(0).unwrap();
        drop(b);
        assert!(matches!(a.recv_frame(), Err(TransportError::Closed)));
    }

    #[test]
    fn pending_data_survives_close() {
        let (mut a, mut b) = SharedBuffer::pair(64);
        b.send_frame(&Frame::new(MessageType::Abort, vec![1]))
            .unwrap();
        drop(b);
        assert_eq!(a.recv_frame().unwrap().payload, vec![1]);
    }

    #[test]
    fn kinds_parse() {
        assert_eq!(
            "shm".parse::<TransportKind>(),
            Ok(TransportKind::SharedBuffer)
        );
        assert_eq!(
            "loopback".parse::<TransportKind>(),
            Ok(TransportKind::Loopback)
        );
        assert!("udp".parse::<TransportKind>().is_err());
    }
}
