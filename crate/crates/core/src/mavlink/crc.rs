//! X.25 (CRC-16/MCRF4XX) accumulator used by the MAVLink framing.

const CRC_INIT: u16 = 0xFFFF;

/// Running checksum over a byte stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Crc16(u16);

impl Default for Crc16 {
    fn default() -> Self {
        Self(CRC_INIT)
    }
}

impl Crc16 {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn accumulate(&mut self, byte: u8) {
        let mut tmp = byte ^ (self.0 & 0xFF) as u8;
        tmp ^= tmp << 4;
        let tmp = tmp as u16;
        self.0 = (self.0 >> 8) ^ (tmp << 8) ^ (tmp << 3) ^ (tmp >> 4);
    }

    pub fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.accumulate(b);
        }
    }

    pub fn value(self) -> u16 {
        self.0
    }
}

/// Checksum of `bytes` followed by the per-message `crc_extra` seed byte.
pub fn checksum(bytes: &[u8], crc_extra: u8) -> u16 {
    let mut crc = Crc16::new();
    crc.update(bytes);
    crc.accumulate(crc_extra);
    crc.value()
}
