use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use chrono::{DateTime, TimeDelta, Utc};

use super::{LoggerError, ManualClock, Session, SessionManifest, SessionSource, TelemetrySnapshot};
use crate::latest::Latest;
use crate::sim::camera::{render_frame, View};
use crate::sim::{SinkError, TelemetrySink, Tick};

/// Supplies the front and bottom frames for a row.
pub trait FrameSource: Send {
    /// `None` when no frame is available yet; the row is skipped.
    fn frames(&mut self, snapshot: &TelemetrySnapshot) -> Option<(Vec<u8>, Vec<u8>)>;
}

/// Latest frame per camera, written by whoever receives them.
#[derive(Debug, Clone, Default)]
pub struct LatestFrames {
    pub front: Latest<Vec<u8>>,
    pub bottom: Latest<Vec<u8>>,
}

impl FrameSource for LatestFrames {
    fn frames(&mut self, _snapshot: &TelemetrySnapshot) -> Option<(Vec<u8>, Vec<u8>)> {
        Some((self.front.get()?, self.bottom.get()?))
    }
}

/// Synthetic frames stamped with the simulator tick implied by the
/// snapshot's `time_boot_ms`.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticFrames {
    pub tick_rate: f64,
}

impl SyntheticFrames {
    pub fn tick_for(&self, snapshot: &TelemetrySnapshot) -> u64 {
        let ms = snapshot.global_position.map(|g| g.time_boot_ms).unwrap_or(0) as f64;
        // Telemetry for tick k carries t = (k + 1) / rate.
        ((ms * self.tick_rate / 1000.0).round() as u64).saturating_sub(1)
    }
}

impl FrameSource for SyntheticFrames {
    fn frames(&mut self, snapshot: &TelemetrySnapshot) -> Option<(Vec<u8>, Vec<u8>)> {
        let tick = self.tick_for(snapshot);
        Some((render_frame(View::Front, tick), render_frame(View::Bottom, tick)))
    }
}

/// Logs from inside the simulation loop, one row every
/// `tick_rate / rate_hz` ticks, with wall time = `start` + simulated time.
/// Runs as fast as the simulator and is fully deterministic.
pub struct LockstepLogger {
    session: Option<Session>,
    clock: ManualClock,
    start: DateTime<Utc>,
    every: u64,
    snapshot: TelemetrySnapshot,
    dir: PathBuf,
    manifest: Option<SessionManifest>,
}

impl LockstepLogger {
    pub fn new(root: &Path, start: DateTime<Utc>, tick_rate: f64, rate_hz: f64) -> Result<Self, LoggerError> {
        let clock = ManualClock::new(start);
        let session = Session::open(root, SessionSource::Sim, Box::new(clock.clone()))?;
        let every = (tick_rate / rate_hz).round().max(1.0) as u64;
        Ok(Self {
            dir: session.dir().to_path_buf(),
            session: Some(session),
            clock,
            start,
            every,
            snapshot: TelemetrySnapshot::default(),
            manifest: None,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Available after the run finishes.
    pub fn manifest(&self) -> Option<&SessionManifest> {
        self.manifest.as_ref()
    }
}

impl TelemetrySink for LockstepLogger {
    fn on_tick(&mut self, tick: &Tick<'_>) -> Result<(), SinkError> {
        for m in tick.messages {
            self.snapshot.apply(m);
        }
        if !tick.index.is_multiple_of(self.every) {
            return Ok(());
        }
        let Some(session) = self.session.as_mut() else {
            return Err("session already closed".into());
        };
        let offset = TimeDelta::microseconds((tick.state.t * 1e6).round() as i64);
        self.clock.set(self.start + offset);
        let front = render_frame(View::Front, tick.index);
        let bottom = render_frame(View::Bottom, tick.index);
        session.log_iteration(&self.snapshot, &front, &bottom)?;
        Ok(())
    }

    fn finish(&mut self) -> Result<(), SinkError> {
        if let Some(session) = self.session.take() {
            self.manifest = Some(session.close()?);
        }
        Ok(())
    }
}

/// Logger thread sampling the latest telemetry on its own fixed interval.
/// It never waits on the telemetry source; a late wakeup skips the missed
/// slots rather than bursting to catch up.
pub struct RealtimeLogger {
    stop: Arc<AtomicBool>,
    handle: JoinHandle<Result<SessionManifest, LoggerError>>,
    dir: PathBuf,
}

impl RealtimeLogger {
    pub fn spawn(
        mut session: Session,
        telemetry: Latest<TelemetrySnapshot>,
        mut frames: Box<dyn FrameSource>,
        rate_hz: f64,
    ) -> RealtimeLogger {
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let dir = session.dir().to_path_buf();
        let interval = Duration::from_secs_f64(1.0 / rate_hz);
        let handle = std::thread::Builder::new()
            .name("fpvgl-logger".into())
            .spawn(move || {
                let origin = Instant::now();
                let mut slot: u32 = 0;
                while !flag.load(Ordering::Relaxed) {
                    let snapshot = telemetry.get().unwrap_or_default();
                    match frames.frames(&snapshot) {
                        Some((front, bottom)) => {
                            session.log_iteration(&snapshot, &front, &bottom)?;
                        }
                        None => log::debug!("no frames yet, skipping row"),
                    }
                    let elapsed = origin.elapsed();
                    slot = slot.max((elapsed.as_secs_f64() / interval.as_secs_f64()) as u32) + 1;
                    let due = origin + interval * slot;
                    // Sleep in short pieces so a stop request is seen promptly.
                    while !flag.load(Ordering::Relaxed) {
                        let now = Instant::now();
                        if now >= due {
                            break;
                        }
                        std::thread::sleep((due - now).min(Duration::from_millis(20)));
                    }
                }
                session.close()
            })
            .expect("spawn logger thread");
        RealtimeLogger { stop, handle, dir }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn stop_flag(&self) -> Arc<AtomicBool> {
        self.stop.clone()
    }

    /// Stops after the row in progress and closes the session.
    pub fn stop(self) -> Result<SessionManifest, LoggerError> {
        self.stop.store(true, Ordering::Relaxed);
        self.join()
    }

    pub fn join(self) -> Result<SessionManifest, LoggerError> {
        self.handle
            .join()
            .unwrap_or_else(|_| Err(LoggerError::Manifest("logger thread panicked".into())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logger::{read_session, SystemClock};
    use crate::mavlink::{GlobalPositionInt, Message};
    use crate::sim::camera::decode_frame_tick;

    #[test]
    fn synthetic_frames_follow_boot_time() {
        let mut snap = TelemetrySnapshot::default();
        snap.apply(&Message::GlobalPositionInt(GlobalPositionInt {
            time_boot_ms: 1000,
            ..Default::default()
        }));
        let mut src = SyntheticFrames { tick_rate: 50.0 };
        let (front, _) = src.frames(&snap).unwrap();
        assert_eq!(decode_frame_tick(&front), Some(49));
    }

    #[test]
    fn latest_frames_wait_for_both_views() {
        let mut src = LatestFrames::default();
        assert!(src.frames(&TelemetrySnapshot::default()).is_none());
        src.front.set(vec![1]);
        assert!(src.frames(&TelemetrySnapshot::default()).is_none());
        src.bottom.set(vec![2]);
        assert_eq!(
            src.frames(&TelemetrySnapshot::default()),
            Some((vec![1], vec![2]))
        );
    }

    #[test]
    fn realtime_cadence() {
        let tmp = tempfile::tempdir().unwrap();
        let session = Session::open(tmp.path(), SessionSource::Sim, Box::new(SystemClock)).unwrap();
        let cell = Latest::new();
        cell.set(TelemetrySnapshot::default());
        let logger =
            RealtimeLogger::spawn(session, cell, Box::new(SyntheticFrames { tick_rate: 50.0 }), 20.0);
        std::thread::sleep(Duration::from_millis(1000));
        let dir = logger.dir().to_path_buf();
        let m = logger.stop().unwrap();
        assert!((19..=21).contains(&m.row_count), "{}", m.row_count);
        assert_eq!(read_session(&dir).unwrap().rows.len(), m.row_count);
    }
}
