//! Timestamping TCP relay between the airborne side (server) and ground
//! stations (clients).
//!
//! Every MAVLink frame read from the source is wrapped in an envelope
//!
//! ```text
//! 0xA5 | source timestamp, u64 LE, us since the Unix epoch | frame length, u16 LE | frame
//! ```
//!
//! stamped when the relay receives the frame. Clients compare the stamp
//! with their own arrival time, which gives the relay-segment latency when
//! both ends share a clock.

mod client;
mod server;

pub use client::{subscribe, ClientEnd, RelayClient};
pub use server::{serve, Broadcaster, FrameServer, RelayConfig, RelayServer, RelayStats};

use std::time::{SystemTime, UNIX_EPOCH};

use thiserror::Error;

use crate::mavlink::{FrameError, Message, RawFrame, MAX_FRAME_LEN};

pub const ENVELOPE_MAGIC: u8 = 0xA5;
pub const ENVELOPE_HEADER_LEN: usize = 11;
pub const DEFAULT_QUEUE_DEPTH: usize = 1024;
pub const QUEUE_DEPTH_ENV: &str = "FPVGL_RELAY_QUEUE_DEPTH";

/// Microseconds since the Unix epoch.
pub fn now_us() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_micros() as u64)
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub source_timestamp_us: u64,
    /// One complete MAVLink frame.
    pub frame: Vec<u8>,
}

impl Envelope {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(ENVELOPE_HEADER_LEN + self.frame.len());
        self.write_to(&mut out);
        out
    }

    pub fn write_to(&self, out: &mut Vec<u8>) {
        out.push(ENVELOPE_MAGIC);
        out.extend_from_slice(&self.source_timestamp_us.to_le_bytes());
        out.extend_from_slice(&(self.frame.len() as u16).to_le_bytes());
        out.extend_from_slice(&self.frame);
    }

    pub fn message(&self) -> Result<Message, FrameError> {
        RawFrame::parse(&self.frame)?.decode()
    }
}

/// Streaming envelope reader. Anything that is not a well-formed envelope
/// around a checksum-valid frame is skipped one byte at a time until the
/// next magic byte lines up.
#[derive(Debug, Default)]
pub struct EnvelopeDecoder {
    buf: Vec<u8>,
    pos: usize,
    skipped: u64,
}

impl EnvelopeDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Bytes discarded while resynchronizing.
    pub fn skipped_bytes(&self) -> u64 {
        self.skipped
    }

    pub fn feed(&mut self, bytes: &[u8]) -> Vec<Envelope> {
        self.buf.extend_from_slice(bytes);
        let mut out = Vec::new();
        loop {
            let rest = &self.buf[self.pos..];
            let Some(start) = rest.iter().position(|&b| b == ENVELOPE_MAGIC) else {
                self.skipped += rest.len() as u64;
                self.pos = self.buf.len();
                break;
            };
            self.skipped += start as u64;
            self.pos += start;
            let rest = &self.buf[self.pos..];
            if rest.len() < ENVELOPE_HEADER_LEN {
                break;
            }
            let len = u16::from_le_bytes([rest[9], rest[10]]) as usize;
            if len > MAX_FRAME_LEN {
                self.pos += 1;
                self.skipped += 1;
                continue;
            }
            if rest.len() < ENVELOPE_HEADER_LEN + len {
                break;
            }
            let frame = &rest[ENVELOPE_HEADER_LEN..ENVELOPE_HEADER_LEN + len];
            if RawFrame::parse(frame).is_err() {
                self.pos += 1;
                self.skipped += 1;
                continue;
            }
            let ts = u64::from_le_bytes(rest[1..9].try_into().expect("8 bytes"));
            out.push(Envelope {
                source_timestamp_us: ts,
                frame: frame.to_vec(),
            });
            self.pos += ENVELOPE_HEADER_LEN + len;
        }
        self.buf.drain(..self.pos);
        self.pos = 0;
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("no messages received")]
pub struct NoSamples;

/// Arrival minus source timestamp, in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyReport {
    pub count: usize,
    pub min_s: f64,
    pub p50_s: f64,
    pub p95_s: f64,
    pub max_s: f64,
}

impl LatencyReport {
    /// Nearest-rank quantiles over the samples.
    pub fn from_samples(samples: &[f64]) -> Result<LatencyReport, NoSamples> {
        if samples.is_empty() {
            return Err(NoSamples);
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let rank = |q: f64| s[((q * s.len() as f64).ceil() as usize).clamp(1, s.len()) - 1];
        Ok(LatencyReport {
            count: s.len(),
            min_s: s[0],
            p50_s: rank(0.5),
            p95_s: rank(0.95),
            max_s: s[s.len() - 1],
        })
    }
}
