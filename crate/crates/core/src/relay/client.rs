use std::io::{self, Read};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use super::{now_us, Envelope, EnvelopeDecoder, LatencyReport, NoSamples};
use crate::mavlink::Message;

/// How a subscription ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClientEnd {
    /// The server closed the connection.
    Closed,
    /// The connection failed.
    Error(String),
}

#[derive(Debug, Default)]
struct Shared {
    latencies: Mutex<Vec<f64>>,
    received: AtomicU64,
    undecodable: AtomicU64,
}

/// Handle to a subscription's reader thread.
pub struct RelayClient {
    shared: Arc<Shared>,
    stream: TcpStream,
    handle: Option<JoinHandle<ClientEnd>>,
}

/// Connects to a relay and calls `on_message` for every envelope, serially
/// and in arrival order. Envelopes whose frame does not decode to a
/// supported message are counted and skipped.
pub fn subscribe(
    addr: impl ToSocketAddrs,
    mut on_message: impl FnMut(&Envelope, &Message) + Send + 'static,
) -> io::Result<RelayClient> {
    let stream = TcpStream::connect(addr)?;
    stream.set_nodelay(true)?;
    let mut reader = stream.try_clone()?;
    let shared = Arc::new(Shared::default());
    let s = shared.clone();
    let handle = std::thread::Builder::new()
        .name("fpvgl-relay-subscriber".into())
        .spawn(move || {
            let mut decoder = EnvelopeDecoder::new();
            let mut buf = vec![0u8; 8192];
            loop {
                let n = match reader.read(&mut buf) {
                    Ok(0) => return ClientEnd::Closed,
                    Ok(n) => n,
                    Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                    Err(e) => return ClientEnd::Error(e.to_string()),
                };
                for env in decoder.feed(&buf[..n]) {
                    let arrival = now_us();
                    let latency = arrival.saturating_sub(env.source_timestamp_us) as f64 * 1e-6;
                    s.latencies
                        .lock()
                        .unwrap_or_else(|e| e.into_inner())
                        .push(latency);
                    s.received.fetch_add(1, Ordering::Relaxed);
                    match env.message() {
                        Ok(m) => on_message(&env, &m),
                        Err(e) => {
                            s.undecodable.fetch_add(1, Ordering::Relaxed);
                            log::debug!("undecodable relayed frame: {e}");
                        }
                    }
                }
            }
        })?;
    Ok(RelayClient {
        shared,
        stream,
        handle: Some(handle),
    })
}

impl RelayClient {
    pub fn received(&self) -> u64 {
        self.shared.received.load(Ordering::Relaxed)
    }

    pub fn latency_report(&self) -> Result<LatencyReport, NoSamples> {
        LatencyReport::from_samples(&self.shared.latencies.lock().unwrap_or_else(|e| e.into_inner()))
    }

    /// True once the connection has ended.
    pub fn is_closed(&self) -> bool {
        self.handle.as_ref().is_none_or(|h| h.is_finished())
    }

    /// Blocks until the connection ends.
    pub fn wait(mut self) -> ClientEnd {
        self.handle
            .take()
            .map(|h| h.join().unwrap_or(ClientEnd::Error("reader panicked".into())))
            .unwrap_or(ClientEnd::Closed)
    }

    /// Closes the connection and waits for the reader.
    pub fn close(self) -> ClientEnd {
        let _ = self.stream.shutdown(Shutdown::Both);
        self.wait()
    }
}
