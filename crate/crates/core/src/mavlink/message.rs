//! Payload layouts for the supported messages.
//!
//! Field order on the wire is the dialect's size-sorted order (largest
//! scalar type first), not the order the fields are declared in the XML.
//! Only the MAVLink 1 base fields are carried; v2 extension fields are not
//! part of a v1 payload.

use super::FrameError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MessageSpec {
    pub id: u8,
    pub payload_len: u8,
    pub crc_extra: u8,
}

pub const HEARTBEAT: MessageSpec = MessageSpec {
    id: 0,
    payload_len: 9,
    crc_extra: 50,
};
pub const GPS_RAW_INT: MessageSpec = MessageSpec {
    id: 24,
    payload_len: 30,
    crc_extra: 24,
};
pub const ATTITUDE: MessageSpec = MessageSpec {
    id: 30,
    payload_len: 28,
    crc_extra: 39,
};
pub const GLOBAL_POSITION_INT: MessageSpec = MessageSpec {
    id: 33,
    payload_len: 28,
    crc_extra: 104,
};
pub const SERVO_OUTPUT_RAW: MessageSpec = MessageSpec {
    id: 36,
    payload_len: 21,
    crc_extra: 222,
};
pub const RC_CHANNELS: MessageSpec = MessageSpec {
    id: 65,
    payload_len: 42,
    crc_extra: 118,
};
pub const VFR_HUD: MessageSpec = MessageSpec {
    id: 74,
    payload_len: 20,
    crc_extra: 20,
};

pub const SUPPORTED: [MessageSpec; 7] = [
    HEARTBEAT,
    GPS_RAW_INT,
    ATTITUDE,
    GLOBAL_POSITION_INT,
    SERVO_OUTPUT_RAW,
    RC_CHANNELS,
    VFR_HUD,
];

pub fn spec_for(msg_id: u8) -> Option<MessageSpec> {
    SUPPORTED.iter().copied().find(|s| s.id == msg_id)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Heartbeat {
    pub custom_mode: u32,
    pub mav_type: u8,
    pub autopilot: u8,
    pub base_mode: u8,
    pub system_status: u8,
    pub mavlink_version: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GpsRawInt {
    pub time_usec: u64,
    /// Latitude, 1e-7 degrees.
    pub lat: i32,
    /// Longitude, 1e-7 degrees.
    pub lon: i32,
    /// Altitude, millimetres.
    pub alt: i32,
    pub eph: u16,
    pub epv: u16,
    /// Ground speed, cm/s.
    pub vel: u16,
    /// Course over ground, centidegrees.
    pub cog: u16,
    pub fix_type: u8,
    pub satellites_visible: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Attitude {
    pub time_boot_ms: u32,
    pub roll: f32,
    pub pitch: f32,
    pub yaw: f32,
    pub rollspeed: f32,
    pub pitchspeed: f32,
    pub yawspeed: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GlobalPositionInt {
    pub time_boot_ms: u32,
    pub lat: i32,
    pub lon: i32,
    /// Altitude, millimetres.
    pub alt: i32,
    /// Altitude above home, millimetres.
    pub relative_alt: i32,
    /// Velocity north, cm/s.
    pub vx: i16,
    /// Velocity east, cm/s.
    pub vy: i16,
    /// Velocity down, cm/s.
    pub vz: i16,
    /// Heading, centidegrees; `u16::MAX` when unknown.
    pub hdg: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VfrHud {
    pub airspeed: f32,
    pub groundspeed: f32,
    pub alt: f32,
    pub climb: f32,
    pub heading: i16,
    pub throttle: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RcChannels {
    pub time_boot_ms: u32,
    /// PWM in microseconds, 0 when the channel is unused.
    pub chan: [u16; 18],
    pub chancount: u8,
    pub rssi: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ServoOutputRaw {
    pub time_usec: u32,
    pub servo: [u16; 8],
    pub port: u8,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Message {
    Heartbeat(Heartbeat),
    GpsRawInt(GpsRawInt),
    GlobalPositionInt(GlobalPositionInt),
    Attitude(Attitude),
    VfrHud(VfrHud),
    RcChannels(RcChannels),
    ServoOutputRaw(ServoOutputRaw),
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn with_capacity(n: usize) -> Self {
        Self {
            buf: Vec::with_capacity(n),
        }
    }
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn i16(&mut self, v: i16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn i32(&mut self, v: i32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let mut out = [0u8; N];
        out.copy_from_slice(&self.buf[self.pos..self.pos + N]);
        self.pos += N;
        out
    }
    fn u8(&mut self) -> u8 {
        self.take::<1>()[0]
    }
    fn u16(&mut self) -> u16 {
        u16::from_le_bytes(self.take())
    }
    fn i16(&mut self) -> i16 {
        i16::from_le_bytes(self.take())
    }
    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }
    fn i32(&mut self) -> i32 {
        i32::from_le_bytes(self.take())
    }
    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take())
    }
    fn f32(&mut self) -> f32 {
        f32::from_le_bytes(self.take())
    }
}

impl Message {
    pub fn spec(&self) -> MessageSpec {
        match self {
            Message::Heartbeat(_) => HEARTBEAT,
            Message::GpsRawInt(_) => GPS_RAW_INT,
            Message::GlobalPositionInt(_) => GLOBAL_POSITION_INT,
            Message::Attitude(_) => ATTITUDE,
            Message::VfrHud(_) => VFR_HUD,
            Message::RcChannels(_) => RC_CHANNELS,
            Message::ServoOutputRaw(_) => SERVO_OUTPUT_RAW,
        }
    }

    pub fn msg_id(&self) -> u8 {
        self.spec().id
    }

    pub fn name(&self) -> &'static str {
        match self {
            Message::Heartbeat(_) => "HEARTBEAT",
            Message::GpsRawInt(_) => "GPS_RAW_INT",
            Message::GlobalPositionInt(_) => "GLOBAL_POSITION_INT",
            Message::Attitude(_) => "ATTITUDE",
            Message::VfrHud(_) => "VFR_HUD",
            Message::RcChannels(_) => "RC_CHANNELS",
            Message::ServoOutputRaw(_) => "SERVO_OUTPUT_RAW",
        }
    }

    /// Serializes the payload in wire order.
    pub fn payload(&self) -> Vec<u8> {
        let spec = self.spec();
        let mut w = Writer::with_capacity(spec.payload_len as usize);
        match self {
            Message::Heartbeat(m) => {
                w.u32(m.custom_mode);
                w.u8(m.mav_type);
                w.u8(m.autopilot);
                w.u8(m.base_mode);
                w.u8(m.system_status);
                w.u8(m.mavlink_version);
            }
            Message::GpsRawInt(m) => {
                w.u64(m.time_usec);
                w.i32(m.lat);
                w.i32(m.lon);
                w.i32(m.alt);
                w.u16(m.eph);
                w.u16(m.epv);
                w.u16(m.vel);
                w.u16(m.cog);
                w.u8(m.fix_type);
                w.u8(m.satellites_visible);
            }
            Message::GlobalPositionInt(m) => {
                w.u32(m.time_boot_ms);
                w.i32(m.lat);
                w.i32(m.lon);
                w.i32(m.alt);
                w.i32(m.relative_alt);
                w.i16(m.vx);
                w.i16(m.vy);
                w.i16(m.vz);
                w.u16(m.hdg);
            }
            Message::Attitude(m) => {
                w.u32(m.time_boot_ms);
                for v in [m.roll, m.pitch, m.yaw, m.rollspeed, m.pitchspeed, m.yawspeed] {
                    w.f32(v);
                }
            }
            Message::VfrHud(m) => {
                w.f32(m.airspeed);
                w.f32(m.groundspeed);
                w.f32(m.alt);
                w.f32(m.climb);
                w.i16(m.heading);
                w.u16(m.throttle);
            }
            Message::RcChannels(m) => {
                w.u32(m.time_boot_ms);
                for &c in &m.chan {
                    w.u16(c);
                }
                w.u8(m.chancount);
                w.u8(m.rssi);
            }
            Message::ServoOutputRaw(m) => {
                w.u32(m.time_usec);
                for &s in &m.servo {
                    w.u16(s);
                }
                w.u8(m.port);
            }
        }
        debug_assert_eq!(w.buf.len(), spec.payload_len as usize);
        w.buf
    }

    /// Decodes a payload for `msg_id`. The payload length must match the
    /// message's fixed v1 size.
    pub fn from_payload(msg_id: u8, payload: &[u8]) -> Result<Message, FrameError> {
        let spec = spec_for(msg_id).ok_or(FrameError::UnknownMsgId { msg_id })?;
        if payload.len() != spec.payload_len as usize {
            return Err(FrameError::LengthMismatch {
                msg_id,
                expected: spec.payload_len,
                actual: payload.len().min(u8::MAX as usize) as u8,
            });
        }
        let mut r = Reader { buf: payload, pos: 0 };
        let msg = match msg_id {
            0 => Message::Heartbeat(Heartbeat {
                custom_mode: r.u32(),
                mav_type: r.u8(),
                autopilot: r.u8(),
                base_mode: r.u8(),
                system_status: r.u8(),
                mavlink_version: r.u8(),
            }),
            24 => Message::GpsRawInt(GpsRawInt {
                time_usec: r.u64(),
                lat: r.i32(),
                lon: r.i32(),
                alt: r.i32(),
                eph: r.u16(),
                epv: r.u16(),
                vel: r.u16(),
                cog: r.u16(),
                fix_type: r.u8(),
                satellites_visible: r.u8(),
            }),
            33 => Message::GlobalPositionInt(GlobalPositionInt {
                time_boot_ms: r.u32(),
                lat: r.i32(),
                lon: r.i32(),
                alt: r.i32(),
                relative_alt: r.i32(),
                vx: r.i16(),
                vy: r.i16(),
                vz: r.i16(),
                hdg: r.u16(),
            }),
            30 => Message::Attitude(Attitude {
                time_boot_ms: r.u32(),
                roll: r.f32(),
                pitch: r.f32(),
                yaw: r.f32(),
                rollspeed: r.f32(),
                pitchspeed: r.f32(),
                yawspeed: r.f32(),
            }),
            74 => Message::VfrHud(VfrHud {
                airspeed: r.f32(),
                groundspeed: r.f32(),
                alt: r.f32(),
                climb: r.f32(),
                heading: r.i16(),
                throttle: r.u16(),
            }),
            65 => {
                let time_boot_ms = r.u32();
                let mut chan = [0u16; 18];
                for c in chan.iter_mut() {
                    *c = r.u16();
                }
                Message::RcChannels(RcChannels {
                    time_boot_ms,
                    chan,
                    chancount: r.u8(),
                    rssi: r.u8(),
                })
            }
            36 => {
                let time_usec = r.u32();
                let mut servo = [0u16; 8];
                for s in servo.iter_mut() {
                    *s = r.u16();
                }
                Message::ServoOutputRaw(ServoOutputRaw {
                    time_usec,
                    servo,
                    port: r.u8(),
                })
            }
            _ => unreachable!("spec_for covers every supported id"),
        };
        Ok(msg)
    }
}
