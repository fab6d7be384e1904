//! Message framing and payload codecs.
//!
//! ```text
//! frame   = "TGH1" | version:u8 (0x01) | type:u8 | payload_len:LE32 | payload
//! tables  = circuit_digest[32] | and_count:LE32 | and_count * 4 rows * 17 bytes
//! values  = n * (masked_bit:u8 | label[16])
//! abort   = reason:u8
//! ```

use std::fmt;

use thiserror::Error;

use crate::garbling::{
    GarbledCircuit, GarbledGate, GarbledWireValue, GARBLED_FORMAT_VERSION, ROW_BYTES, TABLE_BYTES,
    WIRE_VALUE_BYTES,
};

pub const MAGIC: [u8; 4] = *b"TGH1";
pub const VERSION: u8 = 0x01;
pub const HEADER_BYTES: usize = 10;
/// Upper bound on a single payload; larger headers are rejected before
/// allocating.
pub const MAX_PAYLOAD: u32 = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MessageType {
    GarbledTables = 0x01,
    InputValues = 0x02,
    OutputValues = 0x03,
    Abort = 0x04,
}

impl MessageType {
    pub fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            0x01 => MessageType::GarbledTables,
            0x02 => MessageType::InputValues,
            0x03 => MessageType::OutputValues,
            0x04 => MessageType::Abort,
            _ => return None,
        })
    }
}

impl fmt::Display for MessageType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MessageType::GarbledTables => "GARBLED_TABLES",
            MessageType::InputValues => "INPUT_VALUES",
            MessageType::OutputValues => "OUTPUT_VALUES",
            MessageType::Abort => "ABORT",
        };
        f.write_str(s)
    }
}

/// Why a peer aborted. Authentication failures carry no further detail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum AbortReason {
    Authentication = 0x00,
    DigestMismatch = 0x01,
    ProtocolViolation = 0x02,
}

impl AbortReason {
    pub fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            0x00 => AbortReason::Authentication,
            0x01 => AbortReason::DigestMismatch,
            0x02 => AbortReason::ProtocolViolation,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("bad frame magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported frame version {0}")]
    BadVersion(u8),
    #[error("unknown message type 0x{0:02x}")]
    UnknownType(u8),
    #[error("frame truncated: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("payload of {0} bytes exceeds the frame limit")]
    TooLarge(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("payload truncated: need {needed} bytes, have {have}")]
    Truncated { needed: usize, have: usize },
    #[error("{0} trailing bytes after payload")]
    Trailing(usize),
    #[error("expected {expected} wire values, got {got}")]
    CountMismatch { expected: usize, got: usize },
    #[error("wire value {0}: masked-bit byte is not 0 or 1")]
    BadMaskedBit(usize),
    #[error("unknown abort reason 0x{0:02x}")]
    BadAbortReason(u8),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub kind: MessageType,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(kind: MessageType, payload: Vec<u8>) -> Self {
        Frame { kind, payload }
    }

    pub fn abort(reason: AbortReason) -> Self {
        Frame::new(MessageType::Abort, vec![reason as u8])
    }

    pub fn header(&self) -> [u8; HEADER_BYTES] {
        let mut h = [0u8; HEADER_BYTES];
        h[..4].copy_from_slice(&MAGIC);
        h[4] = VERSION;
        h[5] = self.kind as u8;
        h[6..].copy_from_slice(&(self.payload.len() as u32).to_le_bytes());
        h
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_BYTES + self.payload.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&self.header());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Validates a header and returns the message type and payload length.
    pub fn parse_header(h: &[u8; HEADER_BYTES]) -> Result<(MessageType, usize), FrameError> {
        let magic: [u8; 4] = h[..4].try_into().unwrap();
        if magic != MAGIC {
            return Err(FrameError::BadMagic(magic));
        }
        if h[4] != VERSION {
            return Err(FrameError::BadVersion(h[4]));
        }
        let kind = MessageType::from_byte(h[5]).ok_or(FrameError::UnknownType(h[5]))?;
        let len = u32::from_le_bytes(h[6..].try_into().unwrap());
        if len > MAX_PAYLOAD {
            return Err(FrameError::TooLarge(len));
        }
        Ok((kind, len as usize))
    }

    /// Decodes one frame from the front of `bytes`; returns it with the
    /// number of bytes consumed.
    pub fn decode(bytes: &[u8]) -> Result<(Frame, usize), FrameError> {
        let header: &[u8; HEADER_BYTES] = bytes
            .get(..HEADER_BYTES)
            .and_then(|h| h.try_into().ok())
            .ok_or(FrameError::Truncated {
                needed: HEADER_BYTES,
                have: bytes.len(),
            })?;
        let (kind, len) = Frame::parse_header(header)?;
        let end = HEADER_BYTES + len;
        let payload = bytes.get(HEADER_BYTES..end).ok_or(FrameError::Truncated {
            needed: end,
            have: bytes.len(),
        })?;
        Ok((Frame::new(kind, payload.to_vec()), end))
    }

    pub fn abort_reason(&self) -> Result<AbortReason, CodecError> {
        match self.payload.as_slice() {
            [b] => AbortReason::from_byte(*b).ok_or(CodecError::BadAbortReason(*b)),
            [] => Err(CodecError::Truncated { needed: 1, have: 0 }),
            more => Err(CodecError::Trailing(more.len() - 1)),
        }
    }
}

pub fn serialize_garbled_circuit(gc: &GarbledCircuit) -> Vec<u8> {
    let mut out = Vec::with_capacity(36 + gc.table_bytes());
    out.extend_from_slice(&gc.circuit_digest);
    out.extend_from_slice(&(gc.tables.len() as u32).to_le_bytes());
    for t in &gc.tables {
        for row in &t.rows {
            out.extend_from_slice(row);
        }
    }
    out
}

pub fn deserialize_garbled_circuit(bytes: &[u8]) -> Result<GarbledCircuit, CodecError> {
    if bytes.len() < 36 {
        return Err(CodecError::Truncated {
            needed: 36,
            have: bytes.len(),
        });
    }
    let circuit_digest: [u8; 32] = bytes[..32].try_into().unwrap();
    let count = u32::from_le_bytes(bytes[32..36].try_into().unwrap()) as usize;
    let body = &bytes[36..];
    let needed = count
        .checked_mul(TABLE_BYTES)
        .ok_or(CodecError::Truncated {
            needed: usize::MAX,
            have: bytes.len(),
        })?;
    match body.len().cmp(&needed) {
        std::cmp::Ordering::Less => {
            return Err(CodecError::Truncated {
                needed: 36 + needed,
                have: bytes.len(),
            })
        }
        std::cmp::Ordering::Greater => return Err(CodecError::Trailing(body.len() - needed)),
        std::cmp::Ordering::Equal => {}
    }
    let tables = body
        .chunks_exact(TABLE_BYTES)
        .enumerate()
        .map(|(i, chunk)| {
            let mut rows = [[0u8; ROW_BYTES]; 4];
            for (r, src) in rows.iter_mut().zip(chunk.chunks_exact(ROW_BYTES)) {
                r.copy_from_slice(src);
            }
            GarbledGate {
                gate_index: i as u32,
                rows,
            }
        })
        .collect();
    Ok(GarbledCircuit {
        circuit_digest,
        format_version: GARBLED_FORMAT_VERSION,
        tables,
    })
}

pub fn encode_wire_values(values: &[GarbledWireValue]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_bytes()).collect()
}

pub fn decode_wire_values(
    bytes: &[u8],
    expected: usize,
) -> Result<Vec<GarbledWireValue>, CodecError> {
    if !bytes.len().is_multiple_of(WIRE_VALUE_BYTES) {
        let needed = (bytes.len() / WIRE_VALUE_BYTES + 1) * WIRE_VALUE_BYTES;
        return Err(CodecError::Truncated {
            needed,
            have: bytes.len(),
        });
    }
    let got = bytes.len() / WIRE_VALUE_BYTES;
    if got != expected {
        return Err(CodecError::CountMismatch { expected, got });
    }
    bytes
        .chunks_exact(WIRE_VALUE_BYTES)
        .enumerate()
        .map(|(i, c)| {
            GarbledWireValue::from_bytes(c.try_into().unwrap()).ok_or(CodecError::BadMaskedBit(i))
        })
        .collect()
}
