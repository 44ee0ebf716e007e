//! Synchronized session logging.
//!
//! A session is a directory named after its opening time:
//!
//! ```text
//! <root>/20240301-100000/
//!     flight.csv       one row per logger iteration
//!     front/000000_1709287200000.png
//!     bottom/000000_1709287200000.png
//!     manifest.json    written when the session closes
//! ```
//!
//! Frame files are named `<row index, 6 digits>_<wall ms, 13 digits>.png`.
//! Every row references exactly one front and one bottom frame. Times are
//! UTC.

mod row;
mod runner;

pub use row::{format_timestamp, parse_timestamp, IterationRow, HEADER, NAN_LITERAL};
pub use runner::{FrameSource, LatestFrames, LockstepLogger, RealtimeLogger, SyntheticFrames};

use std::fs::{self, File};
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, DurationRound, TimeDelta, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mavlink::{
    Attitude, GlobalPositionInt, GpsRawInt, Heartbeat, Message, RcChannels, ServoOutputRaw, VfrHud,
};
use crate::sim::camera::View;

pub const CSV_NAME: &str = "flight.csv";
pub const MANIFEST_NAME: &str = "manifest.json";
/// Default servo level that marks the motors as armed.
pub const DEFAULT_ARM_THRESHOLD_US: u16 = 1100;

#[derive(Debug, Error)]
pub enum LoggerError {
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{view} frame is empty")]
    EmptyFrame { view: View },
    #[error("row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("row {row}: wall timestamp does not increase")]
    NonMonotonic { row: usize },
    #[error("row {row}: frame file {path} is missing")]
    MissingFrame { row: usize, path: PathBuf },
    #[error("manifest mismatch: {0}")]
    Manifest(String),
}

/// The most recent message of each kind received so far.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TelemetrySnapshot {
    pub heartbeat: Option<Heartbeat>,
    pub gps_raw: Option<GpsRawInt>,
    pub global_position: Option<GlobalPositionInt>,
    pub attitude: Option<Attitude>,
    pub vfr_hud: Option<VfrHud>,
    pub rc_channels: Option<RcChannels>,
    pub servo_output: Option<ServoOutputRaw>,
}

impl TelemetrySnapshot {
    pub fn apply(&mut self, message: &Message) {
        match *message {
            Message::Heartbeat(m) => self.heartbeat = Some(m),
            Message::GpsRawInt(m) => self.gps_raw = Some(m),
            Message::GlobalPositionInt(m) => self.global_position = Some(m),
            Message::Attitude(m) => self.attitude = Some(m),
            Message::VfrHud(m) => self.vfr_hud = Some(m),
            Message::RcChannels(m) => self.rc_channels = Some(m),
            Message::ServoOutputRaw(m) => self.servo_output = Some(m),
        }
    }
}

pub trait Clock: Send {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// A clock that only moves when told to. Clones share the same time.
#[derive(Debug, Clone)]
pub struct ManualClock(Arc<Mutex<DateTime<Utc>>>);

impl ManualClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        Self(Arc::new(Mutex::new(start)))
    }

    pub fn set(&self, t: DateTime<Utc>) {
        *self.0.lock().unwrap_or_else(|e| e.into_inner()) = t;
    }

    pub fn advance(&self, by: TimeDelta) {
        *self.0.lock().unwrap_or_else(|e| e.into_inner()) += by;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.0.lock().unwrap_or_else(|e| e.into_inner())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionSource {
    Physical,
    Sim,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionManifest {
    pub session_id: String,
    pub row_count: usize,
    pub front_frame_count: usize,
    pub bottom_frame_count: usize,
    pub start: Option<String>,
    pub end: Option<String>,
    pub source: SessionSource,
}

fn truncate_ms(t: DateTime<Utc>) -> DateTime<Utc> {
    t.duration_trunc(TimeDelta::milliseconds(1)).unwrap_or(t)
}

/// An open session. One writer; rows are appended by
/// [`log_iteration`](Session::log_iteration) and the manifest is written by
/// [`close`](Session::close).
pub struct Session {
    dir: PathBuf,
    id: String,
    source: SessionSource,
    clock: Box<dyn Clock>,
    csv: csv::Writer<File>,
    rows: usize,
    first: Option<DateTime<Utc>>,
    last: Option<IterationRow>,
    arm_threshold_us: u16,
    baseline_alt_mm: Option<i32>,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("dir", &self.dir)
            .field("rows", &self.rows)
            .finish()
    }
}

/// Creates `<root>/<YYYYMMDD-HHMMSS>[-n]/` with an empty `flight.csv`
/// (header only) and the two frame folders.
pub fn open_session(
    root: &Path,
    source: SessionSource,
    clock: Box<dyn Clock>,
) -> Result<Session, LoggerError> {
    Session::open(root, source, clock)
}

impl Session {
    pub fn open(root: &Path, source: SessionSource, clock: Box<dyn Clock>) -> Result<Session, LoggerError> {
        fs::create_dir_all(root)?;
        let stamp = clock.now().format("%Y%m%d-%H%M%S").to_string();
        let (dir, id) = (0..)
            .map(|n| {
                if n == 0 {
                    stamp.clone()
                } else {
                    format!("{stamp}-{n}")
                }
            })
            .find_map(|id| {
                let dir = root.join(&id);
                match fs::create_dir(&dir) {
                    Ok(()) => Some(Ok((dir, id))),
                    Err(e) if e.kind() == io::ErrorKind::AlreadyExists => None,
                    Err(e) => Some(Err(e)),
                }
            })
            .expect("unbounded suffix search")?;
        let setup = || -> Result<csv::Writer<File>, LoggerError> {
            for v in View::BOTH {
                fs::create_dir(dir.join(v.as_str()))?;
            }
            let mut w = csv::Writer::from_path(dir.join(CSV_NAME))?;
            w.write_record(HEADER)?;
            w.flush()?;
            Ok(w)
        };
        let csv = match setup() {
            Ok(w) => w,
            Err(e) => {
                let _ = fs::remove_dir_all(&dir);
                return Err(e);
            }
        };
        log::info!("opened session {}", dir.display());
        Ok(Session {
            dir,
            id,
            source,
            clock,
            csv,
            rows: 0,
            first: None,
            last: None,
            arm_threshold_us: DEFAULT_ARM_THRESHOLD_US,
            baseline_alt_mm: None,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn row_count(&self) -> usize {
        self.rows
    }

    pub fn last_row(&self) -> Option<&IterationRow> {
        self.last.as_ref()
    }

    /// Altitude of the first armed row, once seen.
    pub fn baseline_alt_mm(&self) -> Option<i32> {
        self.baseline_alt_mm
    }

    pub fn set_arm_threshold(&mut self, us: u16) {
        self.arm_threshold_us = us;
    }

    /// Appends one row and its two frames, returning the row index.
    ///
    /// The wall timestamp is the clock reading truncated to milliseconds,
    /// nudged forward by 1 ms if it does not exceed the previous row's. If a
    /// frame or the row cannot be written, files already written for this
    /// row are removed and the row count is unchanged.
    pub fn log_iteration(
        &mut self,
        snapshot: &TelemetrySnapshot,
        front: &[u8],
        bottom: &[u8],
    ) -> Result<usize, LoggerError> {
        if front.is_empty() {
            return Err(LoggerError::EmptyFrame { view: View::Front });
        }
        if bottom.is_empty() {
            return Err(LoggerError::EmptyFrame { view: View::Bottom });
        }
        let mut now = truncate_ms(self.clock.now());
        if let Some(prev) = &self.last {
            if now <= prev.wall_timestamp {
                now = prev.wall_timestamp + TimeDelta::milliseconds(1);
            }
        }
        let index = self.rows;
        let name = format!("{index:06}_{:013}.png", now.timestamp_millis());
        let mut row = IterationRow::from_snapshot(now, snapshot);

        let mut baseline = self.baseline_alt_mm;
        if baseline.is_none() && row.motors_armed(self.arm_threshold_us) {
            baseline = row.alt_mm;
        }
        row.rel_alt_mm = match (baseline, row.alt_mm) {
            (Some(b), Some(a)) => Some(a - b),
            _ => None,
        };
        row.front_frame = name.clone();
        row.bottom_frame = name.clone();

        let front_path = self.dir.join(View::Front.as_str()).join(&name);
        let bottom_path = self.dir.join(View::Bottom.as_str()).join(&name);
        let written = (|| -> Result<(), LoggerError> {
            fs::write(&front_path, front)?;
            fs::write(&bottom_path, bottom)?;
            self.csv.write_record(row.to_record())?;
            self.csv.flush()?;
            Ok(())
        })();
        if let Err(e) = written {
            let _ = fs::remove_file(&front_path);
            let _ = fs::remove_file(&bottom_path);
            return Err(e);
        }

        self.baseline_alt_mm = baseline;
        self.first.get_or_insert(now);
        self.last = Some(row);
        self.rows += 1;
        Ok(index)
    }

    pub fn manifest(&self) -> SessionManifest {
        SessionManifest {
            session_id: self.id.clone(),
            row_count: self.rows,
            front_frame_count: self.rows,
            bottom_frame_count: self.rows,
            start: self.first.as_ref().map(format_timestamp),
            end: self.last.as_ref().map(|r| format_timestamp(&r.wall_timestamp)),
            source: self.source,
        }
    }

    /// Flushes the CSV and writes `manifest.json`.
    pub fn close(mut self) -> Result<SessionManifest, LoggerError> {
        self.csv.flush()?;
        let manifest = self.manifest();
        fs::write(
            self.dir.join(MANIFEST_NAME),
            serde_json::to_string_pretty(&manifest)?,
        )?;
        log::info!("closed session {} with {} rows", self.dir.display(), self.rows);
        Ok(manifest)
    }
}

/// A logged flight read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct FlightSession {
    pub dir: PathBuf,
    pub manifest: SessionManifest,
    pub rows: Vec<IterationRow>,
}

impl FlightSession {
    pub fn frame_path(&self, view: View, row: usize) -> PathBuf {
        let r = &self.rows[row];
        let name = match view {
            View::Front => &r.front_frame,
            View::Bottom => &r.bottom_frame,
        };
        self.dir.join(view.as_str()).join(name)
    }

    /// Index of the first row whose motors read armed.
    pub fn first_armed_row(&self, threshold_us: u16) -> Option<usize> {
        self.rows.iter().position(|r| r.motors_armed(threshold_us))
    }
}

/// Reads and validates a closed session: every row parses, wall timestamps
/// strictly increase, every referenced frame exists, and the counts agree
/// with the manifest and with the frame folders.
pub fn read_session(dir: &Path) -> Result<FlightSession, LoggerError> {
    let manifest: SessionManifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_NAME))?)?;
    let mut reader = csv::Reader::from_path(dir.join(CSV_NAME))?;
    let header = reader.headers()?.clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(LoggerError::Manifest(
            "flight.csv header does not match the row layout".into(),
        ));
    }
    let mut rows: Vec<IterationRow> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| LoggerError::MalformedRow {
            row: i,
            reason: e.to_string(),
        })?;
        let row =
            IterationRow::from_record(&rec).map_err(|reason| LoggerError::MalformedRow { row: i, reason })?;
        if rows
            .last()
            .is_some_and(|p| row.wall_timestamp <= p.wall_timestamp)
        {
            return Err(LoggerError::NonMonotonic { row: i });
        }
        rows.push(row);
    }
    let session = FlightSession {
        dir: dir.to_path_buf(),
        manifest,
        rows,
    };
    for i in 0..session.rows.len() {
        for v in View::BOTH {
            let path = session.frame_path(v, i);
            if !path.is_file() {
                return Err(LoggerError::MissingFrame { row: i, path });
            }
        }
    }
    let m = &session.manifest;
    let n = session.rows.len();
    if m.row_count != n || m.front_frame_count != n || m.bottom_frame_count != n {
        return Err(LoggerError::Manifest(format!(
            "manifest counts rows={} front={} bottom={} but flight.csv has {n} rows",
            m.row_count, m.front_frame_count, m.bottom_frame_count
        )));
    }
    for v in View::BOTH {
        let on_disk = fs::read_dir(dir.join(v.as_str()))?.count();
        if on_disk != n {
            return Err(LoggerError::Manifest(format!(
                "{v}/ holds {on_disk} files for {n} rows"
            )));
        }
    }
    Ok(session)
}
