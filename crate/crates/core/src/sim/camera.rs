//! Synthetic camera frames.
//!
//! Each frame is a small flat-grey PNG whose first row carries the tick
//! index as eight big-endian bytes, one byte per pixel, so a frame file can
//! be matched back to the telemetry row it was logged with.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const FRAME_WIDTH: u32 = 64;
pub const FRAME_HEIGHT: u32 = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Front,
    Bottom,
}

impl View {
    pub const BOTH: [View; 2] = [View::Front, View::Bottom];

    pub fn as_str(self) -> &'static str {
        match self {
            View::Front => "front",
            View::Bottom => "bottom",
        }
    }

    fn background(self) -> u8 {
        match self {
            View::Front => 96,
            View::Bottom => 160,
        }
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for View {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "front" => Ok(View::Front),
            "bottom" => Ok(View::Bottom),
            other => Err(format!("unknown view {other:?}")),
        }
    }
}

pub fn render_frame(view: View, tick: u64) -> Vec<u8> {
    let mut pixels = vec![view.background(); (FRAME_WIDTH * FRAME_HEIGHT) as usize];
    pixels[..8].copy_from_slice(&tick.to_be_bytes());
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, FRAME_WIDTH, FRAME_HEIGHT);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().expect("in-memory PNG header");
        w.write_image_data(&pixels).expect("in-memory PNG data");
    }
    out
}

/// Recovers the tick index from a frame made by [`render_frame`].
pub fn decode_frame_tick(bytes: &[u8]) -> Option<u64> {
    let decoder = png::Decoder::new(bytes);
    let mut reader = decoder.read_info().ok()?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).ok()?;
    if info.color_type != png::ColorType::Grayscale || info.width < 8 {
        return None;
    }
    Some(u64::from_be_bytes(buf[..8].try_into().ok()?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tick_survives_png() {
        for tick in [0, 1, 4242, u64::MAX] {
            for v in View::BOTH {
                assert_eq!(decode_frame_tick(&render_frame(v, tick)), Some(tick));
            }
        }
        assert_eq!(decode_frame_tick(b"not a png"), None);
    }

    #[test]
    fn views_differ() {
        assert_ne!(render_frame(View::Front, 5), render_frame(View::Bottom, 5));
    }
}
