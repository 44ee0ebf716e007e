//! Logged sessions as reinforcement-learning episodes.
//!
//! Each armed logger row becomes one step: an observation (frames,
//! position, velocity, attitude, distance and bearing to the landing point)
//! and the pilot's stick action normalized to [-1, 1]. The dataset is one
//! JSON document; frame paths in it are relative to that document.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodesy::{geodetic_to_enu, Ellipsoid, Geodetic};
use crate::logger::{FlightSession, IterationRow, DEFAULT_ARM_THRESHOLD_US};
use crate::sim::camera::View;
use crate::sim::scenario::{Scenario, Task};

pub const SCHEMA_VERSION: u32 = 1;

const PWM_CENTER: f64 = 1500.0;
const PWM_HALF_RANGE: f64 = 500.0;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("channel value {0} is a no-signal sentinel")]
    Sentinel(u16),
    #[error("row {row}: {reason}")]
    InvalidRow { row: usize, reason: String },
    #[error("session has no armed rows")]
    NoArmedRows,
    #[error("dataset has no steps")]
    EmptyDataset,
    #[error("unsupported schema version {found}; expected {SCHEMA_VERSION}")]
    SchemaVersion { found: u32 },
    #[error("frame {0} does not exist")]
    MissingFrame(PathBuf),
    #[error("bad channel map: {0}")]
    ChannelMap(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Maps a PWM pulse width to [-1, 1] with 1500 us at 0. Values outside
/// 1000..=2000 us saturate; 0 and 65535 mean "no signal" and are errors.
pub fn normalize_pwm(us: u16) -> Result<f64, ExportError> {
    if us == 0 || us == u16::MAX {
        return Err(ExportError::Sentinel(us));
    }
    Ok(((us as f64 - PWM_CENTER) / PWM_HALF_RANGE).clamp(-1.0, 1.0))
}

/// Inverse of [`normalize_pwm`] on [-1, 1], rounded to whole microseconds.
pub fn denormalize_pwm(v: f64) -> u16 {
    (PWM_CENTER + PWM_HALF_RANGE * v.clamp(-1.0, 1.0)).round() as u16
}

/// Which RC channel (1-based) carries each stick axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelMap {
    pub roll: usize,
    pub pitch: usize,
    pub throttle: usize,
    pub yaw: usize,
}

impl Default for ChannelMap {
    /// AETR.
    fn default() -> Self {
        Self {
            roll: 1,
            pitch: 2,
            throttle: 3,
            yaw: 4,
        }
    }
}

impl ChannelMap {
    fn validate(self) -> Result<Self, ExportError> {
        let chans = [self.roll, self.pitch, self.throttle, self.yaw];
        if let Some(c) = chans.iter().find(|&&c| !(1..=8).contains(&c)) {
            return Err(ExportError::ChannelMap(format!("channel {c} is outside 1..=8")));
        }
        for (i, a) in chans.iter().enumerate() {
            if chans[i + 1..].contains(a) {
                return Err(ExportError::ChannelMap(format!("channel {a} is used twice")));
            }
        }
        Ok(self)
    }
}

impl FromStr for ChannelMap {
    type Err = ExportError;

    /// `roll=1,pitch=2,throttle=3,yaw=4`; axes left out keep their AETR
    /// channel.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut map = ChannelMap::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (axis, chan) = part
                .split_once('=')
                .ok_or_else(|| ExportError::ChannelMap(format!("expected axis=channel, got {part:?}")))?;
            let chan: usize = chan
                .trim()
                .parse()
                .map_err(|_| ExportError::ChannelMap(format!("bad channel number in {part:?}")))?;
            match axis.trim() {
                "roll" => map.roll = chan,
                "pitch" => map.pitch = chan,
                "throttle" => map.throttle = chan,
                "yaw" => map.yaw = chan,
                other => return Err(ExportError::ChannelMap(format!("unknown axis {other:?}"))),
            }
        }
        map.validate()
    }
}

impl fmt::Display for ChannelMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "roll={},pitch={},throttle={},yaw={}",
            self.roll, self.pitch, self.throttle, self.yaw
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub throttle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub front_frame: String,
    pub bottom_frame: String,
    pub lat: f64,
    pub lon: f64,
    pub rel_alt_m: Option<f64>,
    /// North, east, down in m/s.
    pub velocity_ned: Option<[f64; 3]>,
    pub roll_rad: Option<f64>,
    pub pitch_rad: Option<f64>,
    pub yaw_rad: Option<f64>,
    /// Horizontal distance to the landing point, metres.
    pub distance_to_goal_m: f64,
    /// Compass bearing to the landing point, radians clockwise from north.
    pub bearing_to_goal_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStep {
    /// Seconds since the first step.
    pub t: f64,
    /// Session row the step came from.
    pub row: usize,
    pub observation: Observation,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeDataset {
    pub schema_version: u32,
    pub session_id: String,
    pub task: Task,
    pub channel_map: ChannelMap,
    pub steps: Vec<EpisodeStep>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExportOptions {
    pub channel_map: ChannelMap,
    pub arm_threshold_us: u16,
}

impl Default for ExportOptions {
    fn default() -> Self {
        Self {
            channel_map: ChannelMap::default(),
            arm_threshold_us: DEFAULT_ARM_THRESHOLD_US,
        }
    }
}

fn action_for(row: &IterationRow, map: ChannelMap) -> Result<Action, String> {
    let read = |chan: usize| -> Result<f64, String> {
        let us = row.rc_us[chan - 1].ok_or_else(|| format!("no RC value on channel {chan}"))?;
        normalize_pwm(us).map_err(|e| format!("channel {chan}: {e}"))
    };
    Ok(Action {
        roll: read(map.roll)?,
        pitch: read(map.pitch)?,
        yaw: read(map.yaw)?,
        throttle: read(map.throttle)?,
    })
}

/// Builds an episode from every armed row of `session`.
///
/// Distance and bearing are measured in the scenario's frame, anchored at
/// the scenario origin or at `origin` when it has none. Frame paths are
/// written relative to `dataset_dir`.
pub fn export_episode(
    session: &FlightSession,
    scenario: &Scenario,
    origin: &Geodetic,
    dataset_dir: &Path,
    options: &ExportOptions,
) -> Result<EpisodeDataset, ExportError> {
    let map = options.channel_map.validate()?;
    let origin = scenario.origin.unwrap_or(*origin);
    let ell = Ellipsoid::WGS84;
    let rel = |p: PathBuf| -> String {
        let abs = std::path::absolute(&p).unwrap_or(p);
        let base = std::path::absolute(dataset_dir).unwrap_or_else(|_| dataset_dir.to_path_buf());
        pathdiff::diff_paths(&abs, &base)
            .unwrap_or(abs)
            .to_string_lossy()
            .replace('\\', "/")
    };
    let mut steps = Vec::new();
    let mut t0 = None;
    for (i, row) in session.rows.iter().enumerate() {
        if !row.motors_armed(options.arm_threshold_us) {
            continue;
        }
        let invalid = |reason: String| ExportError::InvalidRow { row: i, reason };
        let (Some(lat), Some(lon), Some(alt)) = (row.lat_1e7, row.lon_1e7, row.alt_mm) else {
            return Err(invalid("no GPS fix".into()));
        };
        let fix = Geodetic::from_scaled(lat, lon, alt);
        let here = geodetic_to_enu(&fix, &origin, &ell);
        let (de, dn) = (scenario.landing[0] - here.e, scenario.landing[1] - here.n);
        let velocity_ned = match (row.vx_cms, row.vy_cms, row.vz_cms) {
            (Some(n), Some(e), Some(d)) => Some([n as f64 / 100.0, e as f64 / 100.0, d as f64 / 100.0]),
            _ => None,
        };
        let t0 = *t0.get_or_insert(row.wall_timestamp);
        steps.push(EpisodeStep {
            t: (row.wall_timestamp - t0).num_milliseconds() as f64 / 1000.0,
            row: i,
            observation: Observation {
                front_frame: rel(session.frame_path(View::Front, i)),
                bottom_frame: rel(session.frame_path(View::Bottom, i)),
                lat: fix.lat,
                lon: fix.lon,
                rel_alt_m: row.rel_alt_mm.map(|mm| mm as f64 / 1000.0),
                velocity_ned,
                roll_rad: row.roll_rad,
                pitch_rad: row.pitch_rad,
                yaw_rad: row.yaw_rad,
                distance_to_goal_m: de.hypot(dn),
                bearing_to_goal_rad: de.atan2(dn),
            },
            action: action_for(row, map).map_err(invalid)?,
        });
    }
    if steps.is_empty() {
        return Err(ExportError::NoArmedRows);
    }
    Ok(EpisodeDataset {
        schema_version: SCHEMA_VERSION,
        session_id: session.manifest.session_id.clone(),
        task: scenario.task,
        channel_map: map,
        steps,
    })
}

fn check_frames(ds: &EpisodeDataset, base: &Path) -> Result<(), ExportError> {
    for s in &ds.steps {
        for f in [&s.observation.front_frame, &s.observation.bottom_frame] {
            let p = base.join(f);
            if !p.is_file() {
                return Err(ExportError::MissingFrame(p));
            }
        }
    }
    Ok(())
}

fn base_dir(path: &Path) -> &Path {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
}

/// Writes the dataset as pretty JSON after checking that it has steps and
/// that every frame it names exists.
pub fn write_dataset(path: &Path, ds: &EpisodeDataset) -> Result<(), ExportError> {
    if ds.steps.is_empty() {
        return Err(ExportError::EmptyDataset);
    }
    check_frames(ds, base_dir(path))?;
    fs::write(path, serde_json::to_vec_pretty(ds)?)?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<EpisodeDataset, ExportError> {
    let ds: EpisodeDataset = serde_json::from_slice(&fs::read(path)?)?;
    if ds.schema_version != SCHEMA_VERSION {
        return Err(ExportError::SchemaVersion {
            found: ds.schema_version,
        });
    }
    if ds.steps.is_empty() {
        return Err(ExportError::EmptyDataset);
    }
    check_frames(&ds, base_dir(path))?;
    Ok(ds)
}
