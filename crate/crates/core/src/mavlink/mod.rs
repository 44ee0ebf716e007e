//! MAVLink 1 framing for the telemetry subset the ground station consumes.
//!
//! Frame layout (all multi-byte fields little-endian):
//!
//! ```text
//! 0xFE | len | seq | sys_id | comp_id | msg_id | payload[len] | crc_lo | crc_hi
//! ```
//!
//! The checksum covers `len..=payload` followed by the message's CRC-extra
//! byte.

mod crc;
mod message;
mod parser;

pub use crc::{checksum, Crc16};
pub use message::{
    spec_for, Attitude, GlobalPositionInt, GpsRawInt, Heartbeat, Message, MessageSpec, RcChannels,
    ServoOutputRaw, VfrHud, ATTITUDE, GLOBAL_POSITION_INT, GPS_RAW_INT, HEARTBEAT, RC_CHANNELS,
    SERVO_OUTPUT_RAW, SUPPORTED, VFR_HUD,
};
pub use parser::Parser;

use thiserror::Error;

pub const MAGIC_V1: u8 = 0xFE;
pub const HEADER_LEN: usize = 6;
pub const CHECKSUM_LEN: usize = 2;
pub const MAX_FRAME_LEN: usize = HEADER_LEN + 255 + CHECKSUM_LEN;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("bad checksum for msg id {msg_id}: expected {expected:#06x}, got {actual:#06x}")]
    BadChecksum { msg_id: u8, expected: u16, actual: u16 },
    #[error("unknown msg id {msg_id}")]
    UnknownMsgId { msg_id: u8 },
    #[error("msg id {msg_id} has payload length {actual}, expected {expected}")]
    LengthMismatch { msg_id: u8, expected: u8, actual: u8 },
    #[error("frame does not start with the v1 magic byte (found {found:?})")]
    BadMagic { found: Option<u8> },
    #[error("frame declares a {declared}-byte payload but is {actual} bytes long")]
    Truncated { declared: u8, actual: usize },
}

/// One frame as it appears on the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFrame {
    pub seq: u8,
    pub sys_id: u8,
    pub comp_id: u8,
    pub msg_id: u8,
    pub payload: Vec<u8>,
    pub checksum: u16,
}

impl RawFrame {
    pub fn from_message(message: &Message, seq: u8, sys_id: u8, comp_id: u8) -> Self {
        let spec = message.spec();
        let payload = message.payload();
        let mut crc = Crc16::new();
        crc.update(&[payload.len() as u8, seq, sys_id, comp_id, spec.id]);
        crc.update(&payload);
        crc.accumulate(spec.crc_extra);
        RawFrame {
            seq,
            sys_id,
            comp_id,
            msg_id: spec.id,
            payload,
            checksum: crc.value(),
        }
    }

    pub fn payload_len(&self) -> u8 {
        self.payload.len() as u8
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.len() + CHECKSUM_LEN
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.write_to(&mut out);
        out
    }

    pub fn write_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&[
            MAGIC_V1,
            self.payload.len() as u8,
            self.seq,
            self.sys_id,
            self.comp_id,
            self.msg_id,
        ]);
        out.extend_from_slice(&self.payload);
        out.extend_from_slice(&self.checksum.to_le_bytes());
    }

    /// Parses exactly one frame occupying all of `bytes`, checksum included.
    pub fn parse(bytes: &[u8]) -> Result<RawFrame, FrameError> {
        match bytes.first() {
            Some(&MAGIC_V1) => {}
            found => {
                return Err(FrameError::BadMagic {
                    found: found.copied(),
                })
            }
        }
        let declared = bytes.get(1).copied().unwrap_or(0);
        if bytes.len() < HEADER_LEN + CHECKSUM_LEN
            || bytes.len() != HEADER_LEN + declared as usize + CHECKSUM_LEN
        {
            return Err(FrameError::Truncated {
                declared,
                actual: bytes.len(),
            });
        }
        Parser::new()
            .feed_frames(bytes)
            .into_iter()
            .next()
            .expect("a complete candidate frame always yields a result")
    }

    pub fn decode(&self) -> Result<Message, FrameError> {
        Message::from_payload(self.msg_id, &self.payload)
    }
}

/// Encodes `message` as one complete v1 frame.
pub fn encode(message: &Message, seq: u8, sys_id: u8, comp_id: u8) -> Vec<u8> {
    RawFrame::from_message(message, seq, sys_id, comp_id).to_bytes()
}

/// Stamps outgoing frames with a wrapping sequence counter.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub sys_id: u8,
    pub comp_id: u8,
    seq: u8,
}

impl Encoder {
    pub fn new(sys_id: u8, comp_id: u8) -> Self {
        Self {
            sys_id,
            comp_id,
            seq: 0,
        }
    }

    pub fn encode_into(&mut self, message: &Message, out: &mut Vec<u8>) {
        RawFrame::from_message(message, self.seq, self.sys_id, self.comp_id).write_to(out);
        self.seq = self.seq.wrapping_add(1);
    }

    pub fn encode(&mut self, message: &Message) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_into(message, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heartbeat_zero_frame_layout() {
        let bytes = encode(&Message::Heartbeat(Heartbeat::default()), 0, 1, 1);
        assert_eq!(bytes.len(), 17);
        assert_eq!(&bytes[..6], &[0xFE, 9, 0, 1, 1, 0]);
        assert!(bytes[6..15].iter().all(|&b| b == 0));
        let crc = checksum(&bytes[1..15], 50);
        assert_eq!(&bytes[15..], &crc.to_le_bytes());
    }

    #[test]
    fn attitude_payload_len() {
        let m = Message::Attitude(Attitude {
            roll: 0.1,
            pitch: -0.2,
            yaw: 3.0,
            ..Default::default()
        });
        let bytes = encode(&m, 3, 1, 1);
        assert_eq!(bytes[1], 28);
        assert_eq!(bytes.len(), 28 + 8);
    }

    #[test]
    fn global_position_round_trip() {
        let m = Message::GlobalPositionInt(GlobalPositionInt::default());
        let frame = RawFrame::parse(&encode(&m, 0, 1, 1)).unwrap();
        assert_eq!(frame.decode().unwrap(), m);
    }

    #[test]
    fn encoder_sequence_wraps() {
        let mut enc = Encoder::new(1, 1);
        let m = Message::Heartbeat(Heartbeat::default());
        for i in 0..300u32 {
            let b = enc.encode(&m);
            assert_eq!(b[2], (i % 256) as u8);
        }
    }

    #[test]
    fn parse_rejects_trailing_bytes() {
        let mut b = encode(&Message::Heartbeat(Heartbeat::default()), 0, 1, 1);
        b.push(0);
        assert!(RawFrame::parse(&b).is_err());
    }
}
