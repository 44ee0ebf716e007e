use super::{spec_for, Crc16, FrameError, Message, RawFrame, CHECKSUM_LEN, HEADER_LEN, MAGIC_V1};

/// Incremental stream parser.
///
/// Bytes of an incomplete frame stay buffered between calls. On any framing
/// failure the parser drops only the candidate start byte and rescans, so a
/// spurious magic byte inside garbage can never swallow a real frame that
/// follows it.
#[derive(Debug, Clone, Default)]
pub struct Parser {
    buf: Vec<u8>,
    pos: usize,
}

impl Parser {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of buffered bytes not yet consumed.
    pub fn pending(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn feed(&mut self, bytes: &[u8]) -> Vec<Result<Message, FrameError>> {
        self.feed_frames(bytes)
            .into_iter()
            .map(|r| r.and_then(|f| f.decode()))
            .collect()
    }

    pub fn feed_frames(&mut self, bytes: &[u8]) -> Vec<Result<RawFrame, FrameError>> {
        let mut out = Vec::new();
        self.feed_with(bytes, |r| out.push(r));
        out
    }

    /// Callback form of [`Parser::feed_frames`]; avoids the intermediate
    /// vector on hot paths.
    pub fn feed_with(&mut self, bytes: &[u8], mut emit: impl FnMut(Result<RawFrame, FrameError>)) {
        if bytes.is_empty() && self.pending() == 0 {
            return;
        }
        self.buf.extend_from_slice(bytes);
        loop {
            match self.buf[self.pos..].iter().position(|&b| b == MAGIC_V1) {
                Some(i) => self.pos += i,
                None => {
                    self.pos = self.buf.len();
                    break;
                }
            }
            let avail = &self.buf[self.pos..];
            if avail.len() < HEADER_LEN {
                break;
            }
            let len = avail[1];
            let msg_id = avail[5];
            let Some(spec) = spec_for(msg_id) else {
                emit(Err(FrameError::UnknownMsgId { msg_id }));
                self.pos += 1;
                continue;
            };
            if len != spec.payload_len {
                emit(Err(FrameError::LengthMismatch {
                    msg_id,
                    expected: spec.payload_len,
                    actual: len,
                }));
                self.pos += 1;
                continue;
            }
            let total = HEADER_LEN + len as usize + CHECKSUM_LEN;
            if avail.len() < total {
                break;
            }
            let body_end = HEADER_LEN + len as usize;
            let mut crc = Crc16::new();
            crc.update(&avail[1..body_end]);
            crc.accumulate(spec.crc_extra);
            let expected = crc.value();
            let actual = u16::from_le_bytes([avail[body_end], avail[body_end + 1]]);
            if expected != actual {
                emit(Err(FrameError::BadChecksum {
                    msg_id,
                    expected,
                    actual,
                }));
                self.pos += 1;
                continue;
            }
            emit(Ok(RawFrame {
                seq: avail[2],
                sys_id: avail[3],
                comp_id: avail[4],
                msg_id,
                payload: avail[HEADER_LEN..body_end].to_vec(),
                checksum: actual,
            }));
            self.pos += total;
        }
        self.compact();
    }

    fn compact(&mut self) {
        if self.pos == self.buf.len() {
            self.buf.clear();
            self.pos = 0;
        } else if self.pos > 4096 {
            self.buf.drain(..self.pos);
            self.pos = 0;
        }
    }
}
