//! Relay-to-console bridge.
//!
//! Consoles connect over WebSocket and receive JSON text messages:
//!
//! ```text
//! {"type":"state","t":..,"lat":..,"lon":..,"relAlt":..,"groundSpeed":..,"climb":..,"yawDeg":..}
//! {"type":"frame","view":"front"|"bottom","data":"<base64 PNG>"}
//! {"type":"status","connected":true|false}
//! ```
//!
//! and may send `{"type":"stick","t":..,"roll":..,"pitch":..,"yaw":..,"throttle":..}`,
//! which is forwarded to the simulator as RC_CHANNELS. When the relay goes
//! away the bridge reports `connected: false` and keeps retrying.

use std::io::{self, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{sync_channel, Receiver, SyncSender, TrySendError};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use base64::Engine as _;
use fpvgl_core::mavlink::{Encoder, GlobalPositionInt, Message, RcChannels};
use fpvgl_core::relay::subscribe;
use fpvgl_core::sim::camera::{render_frame, View};
use fpvgl_core::sim::{rc_channels_for, StickCommand};
use fpvgl_core::Latest;
use serde::{Deserialize, Serialize};
use tungstenite::{Message as WsMessage, WebSocket};

/// Outgoing messages queued per console before it is dropped.
const CONSOLE_QUEUE: usize = 256;
const MAX_BACKOFF: Duration = Duration::from_secs(5);
/// Simulator tick rate assumed when turning boot time into frame ticks.
const SIM_TICK_RATE: f64 = 50.0;
/// Ground-station system id used for stick frames.
const GCS_SYS_ID: u8 = 255;
const GCS_COMP_ID: u8 = 190;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ConsoleMessage {
    #[serde(rename_all = "camelCase")]
    State {
        t: f64,
        lat: f64,
        lon: f64,
        rel_alt: f64,
        ground_speed: f64,
        climb: f64,
        yaw_deg: f64,
    },
    Frame {
        view: View,
        data: String,
    },
    Status {
        connected: bool,
    },
    Stick {
        t: f64,
        roll: f64,
        pitch: f64,
        yaw: f64,
        throttle: f64,
    },
}

/// The console's view of one GLOBAL_POSITION_INT.
pub fn state_message(g: &GlobalPositionInt) -> ConsoleMessage {
    let (vn, ve) = (g.vx as f64 / 100.0, g.vy as f64 / 100.0);
    ConsoleMessage::State {
        t: g.time_boot_ms as f64 / 1000.0,
        lat: g.lat as f64 * 1e-7,
        lon: g.lon as f64 * 1e-7,
        rel_alt: g.relative_alt as f64 / 1000.0,
        ground_speed: vn.hypot(ve),
        climb: -(g.vz as f64) / 100.0,
        yaw_deg: if g.hdg == u16::MAX {
            0.0
        } else {
            g.hdg as f64 / 100.0
        },
    }
}

/// A frame message carrying a PNG.
pub fn frame_message(view: View, png: &[u8]) -> ConsoleMessage {
    ConsoleMessage::Frame {
        view,
        data: base64::engine::general_purpose::STANDARD.encode(png),
    }
}

/// Decodes a console's upstream text; anything but a stick message is
/// ignored.
pub fn parse_stick(text: &str) -> Option<StickCommand> {
    match serde_json::from_str(text).ok()? {
        ConsoleMessage::Stick {
            roll,
            pitch,
            yaw,
            throttle,
            ..
        } => {
            let all = [roll, pitch, yaw, throttle];
            all.iter()
                .all(|v| v.is_finite())
                .then(|| StickCommand::new(roll, pitch, yaw, throttle))
        }
        _ => None,
    }
}

/// RC_CHANNELS carrying a stick command.
pub fn stick_frame(cmd: &StickCommand, encoder: &mut Encoder) -> Vec<u8> {
    encoder.encode(&Message::RcChannels(RcChannels {
        chan: rc_channels_for(cmd),
        chancount: 8,
        rssi: 255,
        ..Default::default()
    }))
}

#[derive(Debug, Clone)]
pub struct BridgeConfig {
    pub relay: String,
    pub listen: SocketAddr,
    pub sim: Option<String>,
    pub frame_rate_hz: f64,
}

#[derive(Clone, Default)]
struct Consoles {
    senders: Arc<Mutex<Vec<SyncSender<Arc<str>>>>>,
}

impl Consoles {
    fn add(&self) -> Receiver<Arc<str>> {
        let (tx, rx) = sync_channel(CONSOLE_QUEUE);
        self.senders.lock().unwrap_or_else(|e| e.into_inner()).push(tx);
        rx
    }

    fn send(&self, m: &ConsoleMessage) {
        let text: Arc<str> = serde_json::to_string(m)
            .expect("console messages serialize")
            .into();
        self.senders
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .retain(|tx| match tx.try_send(text.clone()) {
                Ok(()) => true,
                Err(TrySendError::Full(_)) => {
                    log::warn!("console not keeping up; disconnecting it");
                    false
                }
                Err(TrySendError::Disconnected(_)) => false,
            });
    }
}

pub struct Bridge {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl Bridge {
    pub fn start(config: BridgeConfig) -> Result<Bridge> {
        let listener =
            TcpListener::bind(config.listen).with_context(|| format!("binding {}", config.listen))?;
        let addr = listener.local_addr()?;
        listener.set_nonblocking(true)?;
        let stop = Arc::new(AtomicBool::new(false));
        let consoles = Consoles::default();
        let connected = Arc::new(AtomicBool::new(false));
        let sticks: Latest<StickCommand> = Latest::new();
        let stick_seq = Arc::new(std::sync::atomic::AtomicU64::new(0));
        let mut threads = Vec::new();

        {
            let (stop, consoles, connected) = (stop.clone(), consoles.clone(), connected.clone());
            let (sticks, stick_seq) = (sticks.clone(), stick_seq.clone());
            threads.push(
                std::thread::Builder::new()
                    .name("fpvgl-bridge-accept".into())
                    .spawn(move || {
                        while !stop.load(Ordering::Relaxed) {
                            match listener.accept() {
                                Ok((stream, peer)) => {
                                    log::info!("console connected from {peer}");
                                    let rx = consoles.add();
                                    let hello = ConsoleMessage::Status {
                                        connected: connected.load(Ordering::Relaxed),
                                    };
                                    let (stop, sticks, seq) =
                                        (stop.clone(), sticks.clone(), stick_seq.clone());
                                    let _ = std::thread::Builder::new()
                                        .name("fpvgl-bridge-console".into())
                                        .spawn(move || {
                                            if let Err(e) =
                                                serve_console(stream, rx, hello, &stop, &sticks, &seq)
                                            {
                                                log::info!("console {peer} closed: {e}");
                                            }
                                            // Position hold when the pilot goes away.
                                            sticks.set(StickCommand::CENTER);
                                            seq.fetch_add(1, Ordering::Relaxed);
                                        });
                                }
                                Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                                    std::thread::sleep(Duration::from_millis(10))
                                }
                                Err(e) => log::warn!("accept failed: {e}"),
                            }
                        }
                    })?,
            );
        }

        {
            let (stop, consoles, connected) = (stop.clone(), consoles.clone(), connected.clone());
            let (relay, frame_every) = (
                config.relay.clone(),
                Duration::from_secs_f64(1.0 / config.frame_rate_hz),
            );
            threads.push(
                std::thread::Builder::new()
                    .name("fpvgl-bridge-upstream".into())
                    .spawn(move || upstream_loop(&relay, frame_every, &stop, &consoles, &connected))?,
            );
        }

        if let Some(sim) = config.sim.clone() {
            let stop = stop.clone();
            threads.push(
                std::thread::Builder::new()
                    .name("fpvgl-bridge-sticks".into())
                    .spawn(move || stick_loop(&sim, &sticks, &stick_seq, &stop))?,
            );
        }

        Ok(Bridge { addr, stop, threads })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(self) {
        self.stop.store(true, Ordering::Relaxed);
        for t in self.threads {
            let _ = t.join();
        }
    }
}

fn serve_console(
    stream: TcpStream,
    outgoing: Receiver<Arc<str>>,
    hello: ConsoleMessage,
    stop: &AtomicBool,
    sticks: &Latest<StickCommand>,
    seq: &std::sync::atomic::AtomicU64,
) -> Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let mut ws: WebSocket<TcpStream> =
        tungstenite::accept(stream).map_err(|e| anyhow::anyhow!("handshake: {e}"))?;
    ws.get_ref().set_read_timeout(Some(Duration::from_millis(10)))?;
    ws.send(WsMessage::text(serde_json::to_string(&hello)?))?;
    while !stop.load(Ordering::Relaxed) {
        let mut wrote = false;
        while let Ok(text) = outgoing.try_recv() {
            ws.write(WsMessage::text(text.to_string()))?;
            wrote = true;
        }
        if wrote {
            ws.flush()?;
        }
        match ws.read() {
            Ok(WsMessage::Text(t)) => {
                if let Some(cmd) = parse_stick(&t) {
                    sticks.set(cmd);
                    seq.fetch_add(1, Ordering::Relaxed);
                }
            }
            Ok(WsMessage::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(e) => return Err(e.into()),
        }
    }
    let _ = ws.close(None);
    Ok(())
}

fn upstream_loop(
    relay: &str,
    frame_every: Duration,
    stop: &AtomicBool,
    consoles: &Consoles,
    connected: &AtomicBool,
) {
    let mut backoff = Duration::from_millis(200);
    while !stop.load(Ordering::Relaxed) {
        let out = consoles.clone();
        let mut next_frame = Instant::now();
        match subscribe(relay, move |_, m| {
            if let Message::GlobalPositionInt(g) = m {
                out.send(&state_message(g));
                if Instant::now() >= next_frame {
                    next_frame += frame_every;
                    let tick = ((g.time_boot_ms as f64) * SIM_TICK_RATE / 1000.0).round() as u64;
                    for view in View::BOTH {
                        out.send(&frame_message(view, &render_frame(view, tick.saturating_sub(1))));
                    }
                }
            }
        }) {
            Ok(client) => {
                log::info!("relay {relay} connected");
                connected.store(true, Ordering::Relaxed);
                consoles.send(&ConsoleMessage::Status { connected: true });
                backoff = Duration::from_millis(200);
                while !client.is_closed() && !stop.load(Ordering::Relaxed) {
                    std::thread::sleep(Duration::from_millis(20));
                }
                client.close();
                connected.store(false, Ordering::Relaxed);
                consoles.send(&ConsoleMessage::Status { connected: false });
                log::warn!("relay {relay} disconnected");
            }
            Err(e) => {
                log::info!("relay {relay} unavailable: {e}");
                consoles.send(&ConsoleMessage::Status { connected: false });
            }
        }
        let until = Instant::now() + backoff;
        while Instant::now() < until && !stop.load(Ordering::Relaxed) {
            std::thread::sleep(Duration::from_millis(20));
        }
        backoff = (backoff * 2).min(MAX_BACKOFF);
    }
}

/// Keeps a connection to the simulator and writes every new stick command
/// to it. Telemetry the simulator sends back on that connection is read and
/// discarded so the simulator never drops us as a slow peer.
fn stick_loop(
    sim: &str,
    sticks: &Latest<StickCommand>,
    seq: &std::sync::atomic::AtomicU64,
    stop: &AtomicBool,
) {
    let mut encoder = Encoder::new(GCS_SYS_ID, GCS_COMP_ID);
    while !stop.load(Ordering::Relaxed) {
        let mut stream = match TcpStream::connect(sim) {
            Ok(s) => s,
            Err(e) => {
                log::info!("simulator {sim} unavailable: {e}");
                std::thread::sleep(Duration::from_millis(500));
                continue;
            }
        };
        let _ = stream.set_nodelay(true);
        if let Ok(mut drain) = stream.try_clone() {
            std::thread::spawn(move || {
                let _ = io::copy(&mut drain, &mut io::sink());
            });
        }
        let mut sent = seq.load(Ordering::Relaxed);
        // Anything already chosen is sent straight away.
        if let Some(cmd) = sticks.get() {
            if stream.write_all(&stick_frame(&cmd, &mut encoder)).is_err() {
                continue;
            }
        }
        while !stop.load(Ordering::Relaxed) {
            let now = seq.load(Ordering::Relaxed);
            if now != sent {
                sent = now;
                let cmd = sticks.get().unwrap_or(StickCommand::CENTER);
                if stream.write_all(&stick_frame(&cmd, &mut encoder)).is_err() {
                    log::warn!("simulator {sim} went away");
                    break;
                }
            }
            std::thread::sleep(Duration::from_millis(5));
        }
        let _ = stream.shutdown(std::net::Shutdown::Both);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_field_mapping() {
        let g = GlobalPositionInt {
            time_boot_ms: 12_500,
            lat: 430_008_000,
            lon: -787_880_000,
            alt: 184_000,
            relative_alt: 4_000,
            vx: 30,
            vy: 40,
            vz: -20,
            hdg: 9_000,
        };
        let text = serde_json::to_string(&state_message(&g)).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["type"], "state");
        assert_eq!(v["t"], 12.5);
        assert_eq!(v["relAlt"], 4.0);
        assert_eq!(v["groundSpeed"], 0.5);
        assert_eq!(v["climb"], 0.2);
        assert_eq!(v["yawDeg"], 90.0);
        assert!((v["lat"].as_f64().unwrap() - 43.0008).abs() < 1e-9);
        assert!((v["lon"].as_f64().unwrap() + 78.788).abs() < 1e-9);
    }

    #[test]
    fn frame_and_status_shapes() {
        let v = serde_json::to_value(frame_message(View::Bottom, &[1, 2, 3])).unwrap();
        assert_eq!(
            v,
            serde_json::json!({"type": "frame", "view": "bottom", "data": "AQID"})
        );
        let v = serde_json::to_value(ConsoleMessage::Status { connected: false }).unwrap();
        assert_eq!(v, serde_json::json!({"type": "status", "connected": false}));
    }

    #[test]
    fn stick_parsing() {
        let cmd =
            parse_stick(r#"{"type":"stick","t":1.0,"roll":0.5,"pitch":-1,"yaw":0,"throttle":2}"#).unwrap();
        assert_eq!(cmd, StickCommand::new(0.5, -1.0, 0.0, 1.0));
        assert!(parse_stick(r#"{"type":"status","connected":true}"#).is_none());
        assert!(parse_stick("not json").is_none());
        assert!(parse_stick(r#"{"type":"stick","t":1.0,"roll":0.5}"#).is_none());
    }

    #[test]
    fn stick_frame_round_trip() {
        let mut enc = Encoder::new(GCS_SYS_ID, GCS_COMP_ID);
        let cmd = StickCommand::new(1.0, -1.0, 0.0, 0.5);
        let bytes = stick_frame(&cmd, &mut enc);
        let msgs = fpvgl_core::mavlink::Parser::new().feed(&bytes);
        let Ok(Message::RcChannels(rc)) = &msgs[0] else {
            panic!("{msgs:?}")
        };
        assert_eq!(&rc.chan[..4], &[2000, 1000, 1750, 1500]);
        assert_eq!(fpvgl_core::sim::stick_from_rc(&rc.chan), cmd);
    }
}
