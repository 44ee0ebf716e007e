use std::fmt::Display;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};

use super::TelemetrySnapshot;

pub const NAN_LITERAL: &str = "nan";

/// Column names of `flight.csv`, in order.
pub const HEADER: [&str; 33] = [
    "wall_timestamp",
    "time_boot_ms",
    "lat_1e7",
    "lon_1e7",
    "alt_mm",
    "rel_alt_mm",
    "vx_cms",
    "vy_cms",
    "vz_cms",
    "hdg_cdeg",
    "groundspeed_ms",
    "climb_ms",
    "roll_rad",
    "pitch_rad",
    "yaw_rad",
    "rc1_us",
    "rc2_us",
    "rc3_us",
    "rc4_us",
    "rc5_us",
    "rc6_us",
    "rc7_us",
    "rc8_us",
    "servo1_us",
    "servo2_us",
    "servo3_us",
    "servo4_us",
    "servo5_us",
    "servo6_us",
    "servo7_us",
    "servo8_us",
    "front_frame",
    "bottom_frame",
];

/// One logger iteration. `None` is a field with no message of its kind
/// received yet, written as `nan`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRow {
    /// Millisecond precision.
    pub wall_timestamp: DateTime<Utc>,
    pub time_boot_ms: Option<u32>,
    pub lat_1e7: Option<i32>,
    pub lon_1e7: Option<i32>,
    pub alt_mm: Option<i32>,
    /// Altitude minus the altitude of the first armed row.
    pub rel_alt_mm: Option<i32>,
    pub vx_cms: Option<i16>,
    pub vy_cms: Option<i16>,
    pub vz_cms: Option<i16>,
    pub hdg_cdeg: Option<u16>,
    pub groundspeed_ms: Option<f64>,
    pub climb_ms: Option<f64>,
    pub roll_rad: Option<f64>,
    pub pitch_rad: Option<f64>,
    pub yaw_rad: Option<f64>,
    pub rc_us: [Option<u16>; 8],
    pub servo_us: [Option<u16>; 8],
    /// File name inside `front/`.
    pub front_frame: String,
    /// File name inside `bottom/`.
    pub bottom_frame: String,
}

fn finite(v: f32) -> Option<f64> {
    v.is_finite().then_some(v as f64)
}

impl IterationRow {
    /// Telemetry columns from the snapshot. Position comes from
    /// GlobalPositionInt when present, else from GpsRawInt. `rel_alt_mm`
    /// and the frame names are left for the session to fill in.
    pub fn from_snapshot(wall_timestamp: DateTime<Utc>, snap: &TelemetrySnapshot) -> Self {
        let gpi = snap.global_position.as_ref();
        let gps = snap.gps_raw.as_ref();
        let (lat, lon, alt) = match (gpi, gps) {
            (Some(g), _) => (Some(g.lat), Some(g.lon), Some(g.alt)),
            (None, Some(g)) => (Some(g.lat), Some(g.lon), Some(g.alt)),
            (None, None) => (None, None, None),
        };
        let time_boot_ms = gpi
            .map(|g| g.time_boot_ms)
            .or(snap.attitude.map(|a| a.time_boot_ms))
            .or(snap.rc_channels.map(|r| r.time_boot_ms));
        let mut rc_us = [None; 8];
        if let Some(rc) = &snap.rc_channels {
            for (o, c) in rc_us.iter_mut().zip(rc.chan) {
                *o = Some(c);
            }
        }
        let mut servo_us = [None; 8];
        if let Some(s) = &snap.servo_output {
            for (o, c) in servo_us.iter_mut().zip(s.servo) {
                *o = Some(c);
            }
        }
        Self {
            wall_timestamp,
            time_boot_ms,
            lat_1e7: lat,
            lon_1e7: lon,
            alt_mm: alt,
            rel_alt_mm: None,
            vx_cms: gpi.map(|g| g.vx),
            vy_cms: gpi.map(|g| g.vy),
            vz_cms: gpi.map(|g| g.vz),
            hdg_cdeg: gpi.map(|g| g.hdg),
            groundspeed_ms: snap.vfr_hud.and_then(|v| finite(v.groundspeed)),
            climb_ms: snap.vfr_hud.and_then(|v| finite(v.climb)),
            roll_rad: snap.attitude.and_then(|a| finite(a.roll)),
            pitch_rad: snap.attitude.and_then(|a| finite(a.pitch)),
            yaw_rad: snap.attitude.and_then(|a| finite(a.yaw)),
            rc_us,
            servo_us,
            front_frame: String::new(),
            bottom_frame: String::new(),
        }
    }

    /// All four motor outputs at or above `threshold_us`.
    pub fn motors_armed(&self, threshold_us: u16) -> bool {
        self.servo_us[..4]
            .iter()
            .all(|s| s.is_some_and(|v| v >= threshold_us))
    }

    pub fn to_record(&self) -> Vec<String> {
        fn opt<T: Display>(v: Option<T>) -> String {
            v.map_or_else(|| NAN_LITERAL.to_string(), |v| v.to_string())
        }
        let mut r = Vec::with_capacity(HEADER.len());
        r.push(format_timestamp(&self.wall_timestamp));
        r.push(opt(self.time_boot_ms));
        r.push(opt(self.lat_1e7));
        r.push(opt(self.lon_1e7));
        r.push(opt(self.alt_mm));
        r.push(opt(self.rel_alt_mm));
        r.push(opt(self.vx_cms));
        r.push(opt(self.vy_cms));
        r.push(opt(self.vz_cms));
        r.push(opt(self.hdg_cdeg));
        r.push(opt(self.groundspeed_ms));
        r.push(opt(self.climb_ms));
        r.push(opt(self.roll_rad));
        r.push(opt(self.pitch_rad));
        r.push(opt(self.yaw_rad));
        r.extend(self.rc_us.iter().map(|v| opt(*v)));
        r.extend(self.servo_us.iter().map(|v| opt(*v)));
        r.push(self.front_frame.clone());
        r.push(self.bottom_frame.clone());
        r
    }

    pub fn from_record(record: &csv::StringRecord) -> Result<Self, String> {
        if record.len() != HEADER.len() {
            return Err(format!(
                "expected {} fields, found {}",
                HEADER.len(),
                record.len()
            ));
        }
        let f = |i: usize| &record[i];
        fn opt<T: FromStr>(s: &str, name: &str) -> Result<Option<T>, String> {
            if s.eq_ignore_ascii_case(NAN_LITERAL) {
                return Ok(None);
            }
            s.parse().map(Some).map_err(|_| format!("bad {name}: {s:?}"))
        }
        let mut rc_us = [None; 8];
        let mut servo_us = [None; 8];
        for k in 0..8 {
            rc_us[k] = opt(f(15 + k), HEADER[15 + k])?;
            servo_us[k] = opt(f(23 + k), HEADER[23 + k])?;
        }
        Ok(Self {
            wall_timestamp: parse_timestamp(f(0))?,
            time_boot_ms: opt(f(1), HEADER[1])?,
            lat_1e7: opt(f(2), HEADER[2])?,
            lon_1e7: opt(f(3), HEADER[3])?,
            alt_mm: opt(f(4), HEADER[4])?,
            rel_alt_mm: opt(f(5), HEADER[5])?,
            vx_cms: opt(f(6), HEADER[6])?,
            vy_cms: opt(f(7), HEADER[7])?,
            vz_cms: opt(f(8), HEADER[8])?,
            hdg_cdeg: opt(f(9), HEADER[9])?,
            groundspeed_ms: opt(f(10), HEADER[10])?,
            climb_ms: opt(f(11), HEADER[11])?,
            roll_rad: opt(f(12), HEADER[12])?,
            pitch_rad: opt(f(13), HEADER[13])?,
            yaw_rad: opt(f(14), HEADER[14])?,
            rc_us,
            servo_us,
            front_frame: f(31).to_string(),
            bottom_frame: f(32).to_string(),
        })
    }
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn parse_timestamp(s: &str) -> Result<DateTime<Utc>, String> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| format!("bad wall_timestamp {s:?}: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mavlink::{Attitude, GlobalPositionInt, GpsRawInt};

    fn ts() -> DateTime<Utc> {
        parse_timestamp("2024-03-01T10:00:00.125Z").unwrap()
    }

    #[test]
    fn empty_snapshot_is_all_nan() {
        let row = IterationRow::from_snapshot(ts(), &TelemetrySnapshot::default());
        let rec = row.to_record();
        assert_eq!(rec[0], "2024-03-01T10:00:00.125Z");
        assert!(rec[1..31].iter().all(|v| v == "nan"));
    }

    #[test]
    fn record_round_trip() {
        let snap = TelemetrySnapshot {
            global_position: Some(GlobalPositionInt {
                lat: 430008000,
                lon: -787880000,
                alt: 180123,
                vx: -3,
                ..Default::default()
            }),
            attitude: Some(Attitude {
                roll: 0.1,
                pitch: -0.25,
                yaw: 3.0,
                ..Default::default()
            }),
            ..Default::default()
        };
        let mut row = IterationRow::from_snapshot(ts(), &snap);
        row.front_frame = "000000_1709287200125.png".into();
        let rec = csv::StringRecord::from(row.to_record());
        assert_eq!(IterationRow::from_record(&rec).unwrap(), row);
        assert_eq!(row.roll_rad, Some(0.1f32 as f64));
    }

    #[test]
    fn gps_raw_fallback() {
        let snap = TelemetrySnapshot {
            gps_raw: Some(GpsRawInt {
                lat: 5,
                lon: 6,
                alt: 7,
                ..Default::default()
            }),
            ..Default::default()
        };
        let row = IterationRow::from_snapshot(ts(), &snap);
        assert_eq!(
            (row.lat_1e7, row.lon_1e7, row.alt_mm),
            (Some(5), Some(6), Some(7))
        );
        assert_eq!(row.vx_cms, None);
    }

    #[test]
    fn rejects_short_record() {
        let rec = csv::StringRecord::from(vec!["2024-03-01T10:00:00.000Z", "1"]);
        assert!(IterationRow::from_record(&rec).is_err());
    }
}
