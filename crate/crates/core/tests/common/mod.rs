//! Shared helpers for the integration tests: random message generation and
//! conversion into the reference `mavlink` crate's types.

#![allow(dead_code)]

pub mod flight;
pub mod net;

use fpvgl_core::mavlink::*;
use mavlink::dialects::common::{self as refm, MavMessage};
use num_traits::FromPrimitive;
use rand::Rng;

pub fn pwm<R: Rng>(rng: &mut R) -> u16 {
    match rng.gen_range(0..10) {
        0 => 0,
        1 => u16::MAX,
        _ => rng.gen_range(800..=2200),
    }
}

fn finite_f32<R: Rng>(rng: &mut R) -> f32 {
    rng.gen_range(-1.0e4f32..1.0e4)
}

pub fn random_message<R: Rng>(rng: &mut R, kind: usize) -> Message {
    match kind % 7 {
        0 => Message::Heartbeat(Heartbeat {
            custom_mode: rng.gen(),
            mav_type: rng.gen_range(0..=20),
            autopilot: rng.gen_range(0..=19),
            base_mode: rng.gen(),
            system_status: rng.gen_range(0..=8),
            mavlink_version: rng.gen(),
        }),
        1 => Message::GpsRawInt(GpsRawInt {
            time_usec: rng.gen(),
            lat: rng.gen_range(-900_000_000..=900_000_000),
            lon: rng.gen_range(-1_800_000_000..=1_800_000_000),
            alt: rng.gen(),
            eph: rng.gen(),
            epv: rng.gen(),
            vel: rng.gen(),
            cog: rng.gen(),
            fix_type: rng.gen_range(0..=8),
            satellites_visible: rng.gen(),
        }),
        2 => Message::GlobalPositionInt(GlobalPositionInt {
            time_boot_ms: rng.gen(),
            lat: rng.gen_range(-900_000_000..=900_000_000),
            lon: rng.gen_range(-1_800_000_000..=1_800_000_000),
            alt: rng.gen(),
            relative_alt: rng.gen(),
            vx: rng.gen(),
            vy: rng.gen(),
            vz: rng.gen(),
            hdg: rng.gen(),
        }),
        3 => Message::Attitude(Attitude {
            time_boot_ms: rng.gen(),
            roll: rng.gen_range(-std::f32::consts::PI..std::f32::consts::PI),
            pitch: rng.gen_range(-1.5f32..1.5),
            yaw: rng.gen_range(-std::f32::consts::PI..std::f32::consts::PI),
            rollspeed: finite_f32(rng),
            pitchspeed: finite_f32(rng),
            yawspeed: finite_f32(rng),
        }),
        4 => Message::VfrHud(VfrHud {
            airspeed: finite_f32(rng),
            groundspeed: finite_f32(rng),
            alt: finite_f32(rng),
            climb: finite_f32(rng),
            heading: rng.gen_range(0..360),
            throttle: rng.gen_range(0..=100),
        }),
        5 => {
            let mut chan = [0u16; 18];
            for c in chan.iter_mut() {
                *c = pwm(rng);
            }
            Message::RcChannels(RcChannels {
                time_boot_ms: rng.gen(),
                chan,
                chancount: rng.gen_range(0..=18),
                rssi: rng.gen(),
            })
        }
        _ => {
            let mut servo = [0u16; 8];
            for s in servo.iter_mut() {
                *s = pwm(rng);
            }
            Message::ServoOutputRaw(ServoOutputRaw {
                time_usec: rng.gen(),
                servo,
                port: rng.gen_range(0..2),
            })
        }
    }
}

/// Builds the reference crate's message field by field (never via its
/// deserializer, which would mask field-order mistakes).
pub fn to_reference(m: &Message) -> MavMessage {
    match *m {
        Message::Heartbeat(h) => MavMessage::HEARTBEAT(refm::HEARTBEAT_DATA {
            custom_mode: h.custom_mode,
            mavtype: refm::MavType::from_u8(h.mav_type).expect("valid MavType"),
            autopilot: refm::MavAutopilot::from_u8(h.autopilot).expect("valid MavAutopilot"),
            base_mode: refm::MavModeFlag::from_bits_retain(h.base_mode),
            system_status: refm::MavState::from_u8(h.system_status).expect("valid MavState"),
            mavlink_version: h.mavlink_version,
        }),
        Message::GpsRawInt(g) => MavMessage::GPS_RAW_INT(refm::GPS_RAW_INT_DATA {
            time_usec: g.time_usec,
            lat: g.lat,
            lon: g.lon,
            alt: g.alt,
            eph: g.eph,
            epv: g.epv,
            vel: g.vel,
            cog: g.cog,
            fix_type: refm::GpsFixType::from_u8(g.fix_type).expect("valid GpsFixType"),
            satellites_visible: g.satellites_visible,
        }),
        Message::GlobalPositionInt(g) => MavMessage::GLOBAL_POSITION_INT(refm::GLOBAL_POSITION_INT_DATA {
            time_boot_ms: g.time_boot_ms,
            lat: g.lat,
            lon: g.lon,
            alt: g.alt,
            relative_alt: g.relative_alt,
            vx: g.vx,
            vy: g.vy,
            vz: g.vz,
            hdg: g.hdg,
        }),
        Message::Attitude(a) => MavMessage::ATTITUDE(refm::ATTITUDE_DATA {
            time_boot_ms: a.time_boot_ms,
            roll: a.roll,
            pitch: a.pitch,
            yaw: a.yaw,
            rollspeed: a.rollspeed,
            pitchspeed: a.pitchspeed,
            yawspeed: a.yawspeed,
        }),
        Message::VfrHud(v) => MavMessage::VFR_HUD(refm::VFR_HUD_DATA {
            airspeed: v.airspeed,
            groundspeed: v.groundspeed,
            alt: v.alt,
            climb: v.climb,
            heading: v.heading,
            throttle: v.throttle,
        }),
        Message::RcChannels(r) => MavMessage::RC_CHANNELS(refm::RC_CHANNELS_DATA {
            time_boot_ms: r.time_boot_ms,
            chan1_raw: r.chan[0],
            chan2_raw: r.chan[1],
            chan3_raw: r.chan[2],
            chan4_raw: r.chan[3],
            chan5_raw: r.chan[4],
            chan6_raw: r.chan[5],
            chan7_raw: r.chan[6],
            chan8_raw: r.chan[7],
            chan9_raw: r.chan[8],
            chan10_raw: r.chan[9],
            chan11_raw: r.chan[10],
            chan12_raw: r.chan[11],
            chan13_raw: r.chan[12],
            chan14_raw: r.chan[13],
            chan15_raw: r.chan[14],
            chan16_raw: r.chan[15],
            chan17_raw: r.chan[16],
            chan18_raw: r.chan[17],
            chancount: r.chancount,
            rssi: r.rssi,
        }),
        Message::ServoOutputRaw(s) => MavMessage::SERVO_OUTPUT_RAW(refm::SERVO_OUTPUT_RAW_DATA {
            time_usec: s.time_usec,
            servo1_raw: s.servo[0],
            servo2_raw: s.servo[1],
            servo3_raw: s.servo[2],
            servo4_raw: s.servo[3],
            servo5_raw: s.servo[4],
            servo6_raw: s.servo[5],
            servo7_raw: s.servo[6],
            servo8_raw: s.servo[7],
            port: s.port,
        }),
    }
}

pub fn reference_encode(m: &Message, seq: u8, sys_id: u8, comp_id: u8) -> Vec<u8> {
    let mut out = Vec::new();
    let header = mavlink::MavHeader {
        system_id: sys_id,
        component_id: comp_id,
        sequence: seq,
    };
    mavlink::write_v1_msg(&mut out, header, &to_reference(m)).expect("reference encode");
    out
}
