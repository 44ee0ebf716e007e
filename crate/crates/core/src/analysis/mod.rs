//! Trajectory reconstruction and maneuver statistics.
//!
//! A session's GPS rows become a [`LocalTrack`] in the aligned XYZ frame:
//! ENU about the flight's origin, rotated about Up so that a user-chosen
//! reference point lies on +X. X is longitudinal motion, Y lateral, Z
//! height.

mod report;

pub use report::{read_series, render_tables, table_caption, write_series, SeriesKind, FOOTER};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodesy::{
    ecef_to_geodetic, geodetic_to_ecef, geodetic_to_enu, EastAlignment, Ecef, Ellipsoid, GeodesyError,
    Geodetic,
};
use crate::geodesy::{enu_to_geodetic, Enu};
use crate::logger::{FlightSession, DEFAULT_ARM_THRESHOLD_US};
use crate::sim::scenario::{Scenario, Task, TASK1_HOVER_S, TASK1_TARGET_ALTITUDE_M};

/// Longitudinal margin trimmed from both ends of Tasks 2-4, metres.
pub const LONGITUDINAL_MARGIN_M: f64 = 2.0;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("session has fewer than two rows with valid GPS")]
    NoValidGps,
    #[error("{rule}: threshold never reached")]
    ThresholdNeverReached { rule: String },
    #[error("segment has {0} samples; at least 2 are needed")]
    SegmentTooShort(usize),
    #[error("bad trail bounds {start}..={end} for a track of {len} samples")]
    BadTrailBounds { start: usize, end: usize, len: usize },
    #[error(transparent)]
    Geodesy(#[from] GeodesyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AltitudeMode {
    /// The logger's arm-baselined relative altitude.
    #[default]
    Relative,
    /// Up component of the GPS-derived ENU position.
    Gps,
}

impl std::str::FromStr for AltitudeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "relative" => Ok(AltitudeMode::Relative),
            "gps" => Ok(AltitudeMode::Gps),
            other => Err(format!(
                "unknown altitude mode {other:?}; expected relative or gps"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OriginMode {
    /// Mean position of the valid fixes logged before arming, falling back
    /// to the first fix when the log starts armed.
    #[default]
    PreArmMean,
    FirstFix,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackOptions {
    pub altitude_mode: AltitudeMode,
    pub origin_mode: OriginMode,
    pub arm_threshold_us: u16,
}

impl Default for TrackOptions {
    fn default() -> Self {
        Self {
            altitude_mode: AltitudeMode::Relative,
            origin_mode: OriginMode::PreArmMean,
            arm_threshold_us: DEFAULT_ARM_THRESHOLD_US,
        }
    }
}

/// Point that defines +X for a course, in the scenario's local frame.
///
/// This is the landing point, or the far obstacle when the course returns
/// to its start. A course with neither looks east from the start.
pub fn course_reference(scenario: &Scenario) -> [f64; 2] {
    if scenario.landing != scenario.start {
        scenario.landing
    } else if let Some(far) = scenario.obstacles.last() {
        far.center
    } else {
        [scenario.start[0] + 1.0, scenario.start[1]]
    }
}

/// [`course_reference`] as a geodetic point, with `origin` used when the
/// scenario does not carry its own.
pub fn course_reference_geodetic(scenario: &Scenario, origin: &Geodetic) -> Result<Geodetic, GeodesyError> {
    let origin = scenario.origin.unwrap_or(*origin);
    let [e, n] = course_reference(scenario);
    enu_to_geodetic(&Enu::new(e, n, 0.0), &origin, &Ellipsoid::WGS84)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackSample {
    /// Seconds since the first sample.
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalTrack {
    pub samples: Vec<TrackSample>,
    /// Session row each sample came from.
    pub rows: Vec<usize>,
    pub origin: Geodetic,
    /// Rotation about Up applied by the alignment, radians.
    pub alignment_angle: f64,
}

impl LocalTrack {
    /// A track from bare samples, for synthetic data.
    pub fn from_samples(samples: Vec<TrackSample>) -> Self {
        let rows = (0..samples.len()).collect();
        Self {
            samples,
            rows,
            origin: Geodetic {
                lat: 0.0,
                lon: 0.0,
                alt: 0.0,
            },
            alignment_angle: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn mean_geodetic(points: &[Geodetic], ell: &Ellipsoid) -> Result<Geodetic, GeodesyError> {
    let n = points.len() as f64;
    let (mut x, mut y, mut z) = (0.0, 0.0, 0.0);
    for p in points {
        let q = geodetic_to_ecef(p, ell);
        x += q.x;
        y += q.y;
        z += q.z;
    }
    ecef_to_geodetic(
        &Ecef {
            x: x / n,
            y: y / n,
            z: z / n,
        },
        ell,
    )
}

/// Reconstructs the aligned local trajectory of a session.
///
/// Rows without a complete GPS fix are skipped and time is rebased to the
/// first kept row. `reference_point` fixes the +X direction.
pub fn build_track(
    session: &FlightSession,
    reference_point: &Geodetic,
    options: &TrackOptions,
) -> Result<LocalTrack, AnalysisError> {
    let ell = Ellipsoid::WGS84;
    let fixes: Vec<(usize, Geodetic)> = session
        .rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| match (r.lat_1e7, r.lon_1e7, r.alt_mm) {
            (Some(lat), Some(lon), Some(alt)) => Some((i, Geodetic::from_scaled(lat, lon, alt))),
            _ => None,
        })
        .collect();
    if fixes.len() < 2 {
        return Err(AnalysisError::NoValidGps);
    }
    let armed_at = session
        .first_armed_row(options.arm_threshold_us)
        .unwrap_or(usize::MAX);
    let origin = match options.origin_mode {
        OriginMode::FirstFix => fixes[0].1,
        OriginMode::PreArmMean => {
            let pre: Vec<Geodetic> = fixes
                .iter()
                .filter(|(i, _)| *i < armed_at)
                .map(|(_, g)| *g)
                .collect();
            if pre.is_empty() {
                fixes[0].1
            } else {
                mean_geodetic(&pre, &ell)?
            }
        }
    };
    let reference = geodetic_to_enu(reference_point, &origin, &ell);
    let align = EastAlignment::new(&reference)?;

    let t0 = session.rows[fixes[0].0].wall_timestamp;
    let mut samples = Vec::with_capacity(fixes.len());
    let mut rows = Vec::with_capacity(fixes.len());
    for (i, g) in &fixes {
        let row = &session.rows[*i];
        let p = align.apply(&geodetic_to_enu(g, &origin, &ell));
        let z = match options.altitude_mode {
            AltitudeMode::Gps => p.u,
            // Before arming the vehicle sits at its arm altitude.
            AltitudeMode::Relative => match row.rel_alt_mm {
                Some(mm) => mm as f64 / 1000.0,
                None if *i < armed_at => 0.0,
                None => p.u,
            },
        };
        let t = (row.wall_timestamp - t0).num_microseconds().unwrap_or(i64::MAX) as f64 * 1e-6;
        samples.push(TrackSample { t, x: p.e, y: p.n, z });
        rows.push(*i);
    }
    Ok(LocalTrack {
        samples,
        rows,
        origin,
        alignment_angle: align.angle(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManeuverSegment {
    pub task: Task,
    pub start_index: usize,
    /// Inclusive.
    pub end_index: usize,
    pub rule: String,
}

impl ManeuverSegment {
    pub fn len(&self) -> usize {
        self.end_index - self.start_index + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Picks the maneuvering part of a trail.
///
/// - Task 1: from the first sample at or above 4 m to the last sample
///   within 10 s of it.
/// - Tasks 2-4: from the first sample with `x >= 2` to the last sample
///   still at least 2 m from the final sample's `x`. For a trail that ends
///   far down +X this is the last sample with `x <= x_end - 2`; for a trail
///   that returns to its start it is the last sample with `x >= x_end + 2`.
pub fn extract_segment(track: &LocalTrack, task: Task) -> Result<ManeuverSegment, AnalysisError> {
    let s = &track.samples;
    if task == Task::Task1 {
        let rule = format!("first z >= {TASK1_TARGET_ALTITUDE_M} m, then {TASK1_HOVER_S} s");
        let start = s
            .iter()
            .position(|p| p.z >= TASK1_TARGET_ALTITUDE_M)
            .ok_or_else(|| AnalysisError::ThresholdNeverReached { rule: rule.clone() })?;
        let t_end = s[start].t + TASK1_HOVER_S;
        let end = s
            .iter()
            .rposition(|p| p.t <= t_end)
            .expect("start sample qualifies");
        if end <= start {
            return Err(AnalysisError::SegmentTooShort(1));
        }
        return Ok(ManeuverSegment {
            task,
            start_index: start,
            end_index: end,
            rule,
        });
    }
    let m = LONGITUDINAL_MARGIN_M;
    let rule = format!("x from {m} m after the start to {m} m before the end");
    let never = || AnalysisError::ThresholdNeverReached { rule: rule.clone() };
    if s.is_empty() || s.iter().all(|p| p.x < 2.0 * m) {
        return Err(never());
    }
    let start = s.iter().position(|p| p.x >= m).ok_or_else(never)?;
    let x_end = s[s.len() - 1].x;
    let end = s
        .iter()
        .rposition(|p| (p.x - x_end).abs() >= m)
        .ok_or_else(never)?;
    if end <= start {
        return Err(AnalysisError::SegmentTooShort(end.saturating_sub(start) + 1));
    }
    Ok(ManeuverSegment {
        task,
        start_index: start,
        end_index: end,
        rule,
    })
}

/// First and last sample of a trail (inclusive indices).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrailBounds {
    pub start: usize,
    pub end: usize,
}

impl TrailBounds {
    pub fn whole(track: &LocalTrack) -> Self {
        Self {
            start: 0,
            end: track.len().saturating_sub(1),
        }
    }
}

/// One row of a per-task comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub task: Task,
    pub platform_tag: String,
    /// Task 1 only.
    pub hover_distance_to_origin_m: Option<f64>,
    /// Tasks 2-4 only.
    pub lateral_deviation_m: Option<f64>,
    pub height_deviation_m: f64,
    pub trail_time_s: f64,
}

/// Two-pass population standard deviation.
pub fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

pub fn compute_metrics(
    track: &LocalTrack,
    segment: &ManeuverSegment,
    task: Task,
    trail: TrailBounds,
    platform_tag: &str,
) -> Result<TaskMetrics, AnalysisError> {
    let len = track.len();
    if trail.start > trail.end || trail.end >= len {
        return Err(AnalysisError::BadTrailBounds {
            start: trail.start,
            end: trail.end,
            len,
        });
    }
    if segment.end_index >= len || segment.end_index < segment.start_index {
        return Err(AnalysisError::SegmentTooShort(0));
    }
    let seg = &track.samples[segment.start_index..=segment.end_index];
    if seg.len() < 2 {
        return Err(AnalysisError::SegmentTooShort(seg.len()));
    }
    let ys: Vec<f64> = seg.iter().map(|p| p.y).collect();
    let zs: Vec<f64> = seg.iter().map(|p| p.z).collect();
    let (hover, lateral) = if task.is_longitudinal() {
        (None, Some(population_std(&ys)))
    } else {
        let mean = seg.iter().map(|p| p.x.hypot(p.y)).sum::<f64>() / seg.len() as f64;
        (Some(mean), None)
    };
    Ok(TaskMetrics {
        task,
        platform_tag: platform_tag.to_string(),
        hover_distance_to_origin_m: hover,
        lateral_deviation_m: lateral,
        height_deviation_m: population_std(&zs),
        trail_time_s: track.samples[trail.end].t - track.samples[trail.start].t,
    })
}

/// Track, segment and metrics for a whole session in one call.
pub fn analyze_session(
    session: &FlightSession,
    task: Task,
    reference_point: &Geodetic,
    options: &TrackOptions,
    platform_tag: &str,
) -> Result<(LocalTrack, ManeuverSegment, TaskMetrics), AnalysisError> {
    let track = build_track(session, reference_point, options)?;
    let segment = extract_segment(&track, task)?;
    let metrics = compute_metrics(&track, &segment, task, TrailBounds::whole(&track), platform_tag)?;
    Ok((track, segment, metrics))
}
