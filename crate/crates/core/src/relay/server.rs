use std::io::{self, BufWriter, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{sync_channel, SyncSender, TrySendError};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use super::{now_us, Envelope, DEFAULT_QUEUE_DEPTH, QUEUE_DEPTH_ENV};
use crate::mavlink::{Message, Parser};
use crate::sim::{SinkError, TelemetrySink, Tick};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RelayConfig {
    /// Envelopes queued per client before that client is dropped.
    pub queue_depth: usize,
}

impl Default for RelayConfig {
    fn default() -> Self {
        Self {
            queue_depth: DEFAULT_QUEUE_DEPTH,
        }
    }
}

impl RelayConfig {
    /// Defaults, with the queue depth taken from `FPVGL_RELAY_QUEUE_DEPTH`
    /// when set to a positive integer.
    pub fn from_env() -> Self {
        let queue_depth = std::env::var(QUEUE_DEPTH_ENV)
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .filter(|&d: &usize| d > 0)
            .unwrap_or(DEFAULT_QUEUE_DEPTH);
        Self { queue_depth }
    }
}

#[derive(Debug, Default)]
pub struct RelayStats {
    pub frames_in: AtomicU64,
    pub frame_errors: AtomicU64,
    pub clients_connected: AtomicU64,
    pub clients_dropped: AtomicU64,
}

struct Client {
    tx: SyncSender<Arc<[u8]>>,
    stream: TcpStream,
}

/// Fans byte chunks out to TCP clients. Each client has its own writer
/// thread and bounded queue; `broadcast` never blocks, and a client whose
/// queue is full or whose socket failed is disconnected.
#[derive(Clone)]
pub struct Broadcaster {
    clients: Arc<Mutex<Vec<Client>>>,
    depth: usize,
    stats: Arc<RelayStats>,
}

impl Broadcaster {
    pub fn new(depth: usize, stats: Arc<RelayStats>) -> Self {
        Self {
            clients: Arc::default(),
            depth: depth.max(1),
            stats,
        }
    }

    pub fn add(&self, stream: TcpStream) -> io::Result<()> {
        stream.set_nodelay(true)?;
        let (tx, rx) = sync_channel::<Arc<[u8]>>(self.depth);
        let socket = stream.try_clone()?;
        std::thread::Builder::new()
            .name("fpvgl-relay-client".into())
            .spawn(move || {
                // Coalesce whatever is queued into one write, flushing as soon
                // as the queue is empty.
                let mut writer = BufWriter::with_capacity(64 * 1024, &socket);
                let drain = |writer: &mut BufWriter<&TcpStream>, first: Arc<[u8]>| -> io::Result<()> {
                    writer.write_all(&first)?;
                    while let Ok(more) = rx.try_recv() {
                        writer.write_all(&more)?;
                    }
                    writer.flush()
                };
                while let Ok(chunk) = rx.recv() {
                    if drain(&mut writer, chunk).is_err() {
                        break;
                    }
                }
                drop(writer);
                let _ = socket.shutdown(Shutdown::Write);
            })?;
        self.stats.clients_connected.fetch_add(1, Ordering::Relaxed);
        self.clients
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(Client { tx, stream });
        Ok(())
    }

    pub fn client_count(&self) -> usize {
        self.clients.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn broadcast(&self, bytes: &[u8]) {
        let chunk: Arc<[u8]> = Arc::from(bytes);
        let mut clients = self.clients.lock().unwrap_or_else(|e| e.into_inner());
        clients.retain(|c| match c.tx.try_send(chunk.clone()) {
            Ok(()) => true,
            Err(TrySendError::Full(_)) => {
                log::warn!("dropping slow client {:?}", c.stream.peer_addr().ok());
                let _ = c.stream.shutdown(Shutdown::Both);
                self.stats.clients_dropped.fetch_add(1, Ordering::Relaxed);
                false
            }
            Err(TrySendError::Disconnected(_)) => {
                self.stats.clients_dropped.fetch_add(1, Ordering::Relaxed);
                false
            }
        });
    }

    /// Lets every writer drain its queue, then closes the connections.
    pub fn close_all(&self) {
        self.clients.lock().unwrap_or_else(|e| e.into_inner()).clear();
    }
}

fn accept_loop(listener: TcpListener, stop: Arc<AtomicBool>, on_accept: impl Fn(TcpStream)) {
    listener.set_nonblocking(true).expect("nonblocking listener");
    while !stop.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, peer)) => {
                log::info!("client connected from {peer}");
                let _ = stream.set_nonblocking(false);
                on_accept(stream);
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => std::thread::sleep(Duration::from_millis(5)),
            Err(e) => {
                log::warn!("accept failed: {e}");
                std::thread::sleep(Duration::from_millis(50));
            }
        }
    }
}

/// A running relay. Clients connected while the source runs receive every
/// frame ingested after they connected, in order.
pub struct RelayServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    stats: Arc<RelayStats>,
    broadcaster: Broadcaster,
    ingest: Option<JoinHandle<io::Result<()>>>,
    accept: Option<JoinHandle<()>>,
}

/// Binds `listen` and relays frames read from `source` to every client.
///
/// Ingestion runs on its own thread and never waits on a client. When the
/// source reaches end of stream, queued envelopes are flushed and the
/// client connections closed.
pub fn serve<R: Read + Send + 'static>(
    mut source: R,
    listen: impl ToSocketAddrs,
    config: RelayConfig,
) -> io::Result<RelayServer> {
    let listener = TcpListener::bind(listen)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let stats = Arc::new(RelayStats::default());
    let broadcaster = Broadcaster::new(config.queue_depth, stats.clone());

    let accept = {
        let (stop, b) = (stop.clone(), broadcaster.clone());
        std::thread::Builder::new()
            .name("fpvgl-relay-accept".into())
            .spawn(move || {
                accept_loop(listener, stop, |s| {
                    if let Err(e) = b.add(s) {
                        log::warn!("could not register client: {e}");
                    }
                })
            })?
    };

    let ingest = {
        let (stop, b, stats) = (stop.clone(), broadcaster.clone(), stats.clone());
        std::thread::Builder::new()
            .name("fpvgl-relay-ingest".into())
            .spawn(move || {
                let mut parser = Parser::new();
                let mut buf = vec![0u8; 4096];
                let mut last_ts = 0u64;
                let mut out = Vec::with_capacity(512);
                let result = loop {
                    if stop.load(Ordering::Relaxed) {
                        break Ok(());
                    }
                    let n = match source.read(&mut buf) {
                        Ok(0) => break Ok(()),
                        Ok(n) => n,
                        Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                        Err(e) => break Err(e),
                    };
                    parser.feed_with(&buf[..n], |r| match r {
                        Ok(frame) => {
                            let ts = now_us().max(last_ts);
                            last_ts = ts;
                            out.clear();
                            Envelope {
                                source_timestamp_us: ts,
                                frame: frame.to_bytes(),
                            }
                            .write_to(&mut out);
                            stats.frames_in.fetch_add(1, Ordering::Relaxed);
                            b.broadcast(&out);
                        }
                        Err(e) => {
                            stats.frame_errors.fetch_add(1, Ordering::Relaxed);
                            log::debug!("source frame error: {e}");
                        }
                    });
                };
                b.close_all();
                stop.store(true, Ordering::Relaxed);
                result
            })?
    };

    Ok(RelayServer {
        addr,
        stop,
        stats,
        broadcaster,
        ingest: Some(ingest),
        accept: Some(accept),
    })
}

impl RelayServer {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stats(&self) -> &RelayStats {
        &self.stats
    }

    pub fn client_count(&self) -> usize {
        self.broadcaster.client_count()
    }

    /// True once the source has ended or ingestion failed.
    pub fn is_finished(&self) -> bool {
        self.ingest.as_ref().is_none_or(|h| h.is_finished())
    }

    /// Blocks until the source ends.
    pub fn wait(mut self) -> io::Result<()> {
        let r = self
            .ingest
            .take()
            .map(|h| h.join().unwrap_or(Ok(())))
            .unwrap_or(Ok(()));
        self.stop.store(true, Ordering::Relaxed);
        if let Some(a) = self.accept.take() {
            let _ = a.join();
        }
        r
    }

    /// Stops accepting and closes all clients. Ingestion stops at its next
    /// read.
    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::Relaxed);
        self.broadcaster.close_all();
        if let Some(a) = self.accept.take() {
            let _ = a.join();
        }
    }
}

type InboundHandler = Arc<dyn Fn(Message) + Send + Sync>;

/// Raw MAVLink stream server: the simulator's side of a relay source. Every
/// tick's bytes go to all connected peers; messages peers send back are
/// parsed and handed to `on_inbound` (the live-stick path).
pub struct FrameServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    broadcaster: Broadcaster,
    accept: Option<JoinHandle<()>>,
}

impl FrameServer {
    pub fn bind(
        listen: impl ToSocketAddrs,
        config: RelayConfig,
        on_inbound: impl Fn(Message) + Send + Sync + 'static,
    ) -> io::Result<FrameServer> {
        let listener = TcpListener::bind(listen)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let broadcaster = Broadcaster::new(config.queue_depth, Arc::default());
        let handler: InboundHandler = Arc::new(on_inbound);
        let accept = {
            let (stop, b) = (stop.clone(), broadcaster.clone());
            std::thread::Builder::new()
                .name("fpvgl-sim-accept".into())
                .spawn(move || {
                    accept_loop(listener, stop, |s| {
                        let reader = s.try_clone();
                        if let Err(e) = b.add(s) {
                            log::warn!("could not register peer: {e}");
                            return;
                        }
                        if let Ok(mut r) = reader {
                            let h = handler.clone();
                            let _ = std::thread::Builder::new()
                                .name("fpvgl-sim-inbound".into())
                                .spawn(move || {
                                    let mut parser = Parser::new();
                                    let mut buf = [0u8; 1024];
                                    while let Ok(n) = r.read(&mut buf) {
                                        if n == 0 {
                                            break;
                                        }
                                        for m in parser.feed(&buf[..n]).into_iter().flatten() {
                                            h(m);
                                        }
                                    }
                                });
                        }
                    })
                })?
        };
        Ok(FrameServer {
            addr,
            stop,
            broadcaster,
            accept: Some(accept),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn client_count(&self) -> usize {
        self.broadcaster.client_count()
    }

    pub fn send(&self, bytes: &[u8]) {
        self.broadcaster.broadcast(bytes);
    }

    pub fn close(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        self.broadcaster.close_all();
        if let Some(a) = self.accept.take() {
            let _ = a.join();
        }
    }
}

impl Drop for FrameServer {
    fn drop(&mut self) {
        self.close();
    }
}

impl TelemetrySink for FrameServer {
    fn on_tick(&mut self, tick: &Tick<'_>) -> Result<(), SinkError> {
        self.send(tick.bytes);
        Ok(())
    }

    fn finish(&mut self) -> Result<(), SinkError> {
        self.close();
        Ok(())
    }
}
