//! Binary wire frame: 1-byte message kind, 4-byte little-endian payload
//! length, then a payload of (vertex id: 8 bytes LE, keyword id: 4 bytes LE,
//! distance: 8 bytes LE f64) tuples. Message byte metrics are computed from
//! this codec even when messages travel in-process.

use thiserror::Error;

pub const KIND_BACKWARD: u8 = 1;
pub const KIND_FORWARD_MATCH: u8 = 2;
pub const KIND_FORWARD_REQUEST: u8 = 3;
pub const KIND_NOTIFY: u8 = 4;
pub const KIND_PUSH: u8 = 5;

pub const TUPLE_BYTES: usize = 8 + 4 + 8;
pub const HEADER_BYTES: usize = 1 + 4;

#[derive(Debug, Error, PartialEq)]
pub enum FrameError {
    #[error("frame truncated: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("payload length {0} is not a whole number of tuples")]
    RaggedPayload(u32),
    #[error("unknown message kind {0}")]
    UnknownKind(u8),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub kind: u8,
    pub tuples: Vec<(u64, u32, f64)>,
}

pub fn encoded_len(tuple_count: usize) -> u64 {
    (HEADER_BYTES + TUPLE_BYTES * tuple_count) as u64
}

pub fn encode(frame: &Frame) -> Vec<u8> {
    let payload = frame.tuples.len() * TUPLE_BYTES;
    let mut out = Vec::with_capacity(HEADER_BYTES + payload);
    out.push(frame.kind);
    out.extend_from_slice(&(payload as u32).to_le_bytes());
    for &(v, q, d) in &frame.tuples {
        out.extend_from_slice(&v.to_le_bytes());
        out.extend_from_slice(&q.to_le_bytes());
        out.extend_from_slice(&d.to_le_bytes());
    }
    out
}

/// Decode one frame; returns it and the number of bytes consumed.
pub fn decode(bytes: &[u8]) -> Result<(Frame, usize), FrameError> {
    if bytes.len() < HEADER_BYTES {
        return Err(FrameError::Truncated { need: HEADER_BYTES, have: bytes.len() });
    }
    let kind = bytes[0];
    if !(KIND_BACKWARD..=KIND_PUSH).contains(&kind) {
        return Err(FrameError::UnknownKind(kind));
    }
    let len = u32::from_le_bytes(bytes[1..5].try_into().unwrap());
    if len as usize % TUPLE_BYTES != 0 {
        return Err(FrameError::RaggedPayload(len));
    }
    let total = HEADER_BYTES + len as usize;
    if bytes.len() < total {
        return Err(FrameError::Truncated { need: total, have: bytes.len() });
    }
    let mut tuples = Vec::with_capacity(len as usize / TUPLE_BYTES);
    let mut at = HEADER_BYTES;
    while at < total {
        let v = u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
        let q = u32::from_le_bytes(bytes[at + 8..at + 12].try_into().unwrap());
        let d = f64::from_le_bytes(bytes[at + 12..at + 20].try_into().unwrap());
        tuples.push((v, q, d));
        at += TUPLE_BYTES;
    }
    Ok((Frame { kind, tuples }, total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_bit_exact() {
        let frame = Frame { kind: KIND_BACKWARD, tuples: vec![(7, 2, 1.5)] };
        let bytes = encode(&frame);
        assert_eq!(bytes.len() as u64, encoded_len(1));
        assert_eq!(bytes[0], 1);
        assert_eq!(&bytes[1..5], &20u32.to_le_bytes());
        assert_eq!(&bytes[5..13], &7u64.to_le_bytes());
        assert_eq!(&bytes[13..17], &2u32.to_le_bytes());
        assert_eq!(&bytes[17..25], &1.5f64.to_le_bytes());
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(decode(&[9, 0, 0, 0, 0]), Err(FrameError::UnknownKind(9))));
        assert!(matches!(decode(&[1, 1]), Err(FrameError::Truncated { .. })));
        assert!(matches!(decode(&[1, 3, 0, 0, 0, 1, 2, 3]), Err(FrameError::RaggedPayload(3))));
    }

    proptest! {
        #[test]
        fn round_trip(kind in 1u8..=5, tuples in proptest::collection::vec((any::<u64>(), any::<u32>(), 0.0f64..1e12), 0..40)) {
            let frame = Frame { kind, tuples };
            let bytes = encode(&frame);
            prop_assert_eq!(bytes.len() as u64, encoded_len(frame.tuples.len()));
            let (decoded, used) = decode(&bytes).unwrap();
            prop_assert_eq!(used, bytes.len());
            prop_assert_eq!(decoded, frame);
        }
    }
}
