//! Wire records exchanged between driver boards and with the host.
//!
//! State packet, little-endian:
//!
//! | offset      | size | field                      |
//! |-------------|------|----------------------------|
//! | 0           | 1    | header `0xA5`              |
//! | 1           | 1    | board id                   |
//! | 2           | 4    | cycle counter `u32`        |
//! | 6           | 1    | joint count `k`            |
//! | 7 + 9·i     | 1    | joint id                   |
//! | 8 + 9·i     | 4    | q, `f32`                   |
//! | 12 + 9·i    | 4    | v, `f32`                   |
//! | 7 + 9·k     | 2    | CRC-16/CCITT-FALSE of all preceding bytes |
//!
//! Law record: sequence `u32`, then `A` row-major and `b`, all `f32`.

use crc::{Crc, CRC_16_IBM_3740};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linearize::LinearFeedbackLaw;
use crate::Real;

pub const HEADER: u8 = 0xA5;
/// Header, board id, cycle, joint count and checksum.
pub const FRAME_OVERHEAD: usize = 9;
pub const JOINT_RECORD_LEN: usize = 9;
pub const MAX_FRAME_LEN: usize = FRAME_OVERHEAD + JOINT_RECORD_LEN * u8::MAX as usize;

// CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no final xor.
const CRC16: Crc<u16> = Crc::<u16>::new(&CRC_16_IBM_3740);

pub fn crc16(bytes: &[u8]) -> u16 {
    CRC16.checksum(bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("frame truncated: need {needed} bytes, got {got}")]
    Truncated { needed: usize, got: usize },
    #[error("bad header byte {0:#04x}")]
    BadHeader(u8),
    #[error("checksum mismatch: frame says {expected:#06x}, computed {computed:#06x}")]
    BadCrc { expected: u16, computed: u16 },
    #[error("{0} bytes after the end of the frame")]
    TrailingBytes(usize),
    #[error("{0} joints do not fit in one frame")]
    TooManyJoints(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointSample {
    pub id: u8,
    pub q: f32,
    pub v: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatePacket {
    pub board_id: u8,
    pub cycle: u32,
    pub joints: Vec<JointSample>,
}

impl StatePacket {
    pub fn encoded_len(&self) -> usize {
        FRAME_OVERHEAD + JOINT_RECORD_LEN * self.joints.len()
    }
}

pub fn encode_packet(p: &StatePacket) -> Result<Vec<u8>, CodecError> {
    let count =
        u8::try_from(p.joints.len()).map_err(|_| CodecError::TooManyJoints(p.joints.len()))?;
    let mut buf = Vec::with_capacity(p.encoded_len());
    buf.push(HEADER);
    buf.push(p.board_id);
    buf.extend_from_slice(&p.cycle.to_le_bytes());
    buf.push(count);
    for j in &p.joints {
        buf.push(j.id);
        buf.extend_from_slice(&j.q.to_le_bytes());
        buf.extend_from_slice(&j.v.to_le_bytes());
    }
    let crc = crc16(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

/// Decodes exactly one frame occupying all of `bytes`.
///
/// The checksum is verified before any field is interpreted, so corruption
/// anywhere in a frame (header and joint count included) reports
/// [`CodecError::BadCrc`].
pub fn decode_packet(bytes: &[u8]) -> Result<StatePacket, CodecError> {
    if bytes.len() < FRAME_OVERHEAD {
        return Err(CodecError::Truncated {
            needed: FRAME_OVERHEAD,
            got: bytes.len(),
        });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 2);
    let expected = u16::from_le_bytes([tail[0], tail[1]]);
    let computed = crc16(body);
    if expected != computed {
        return Err(CodecError::BadCrc { expected, computed });
    }
    if body[0] != HEADER {
        return Err(CodecError::BadHeader(body[0]));
    }
    let count = body[6] as usize;
    let needed = FRAME_OVERHEAD + JOINT_RECORD_LEN * count;
    if bytes.len() < needed {
        return Err(CodecError::Truncated {
            needed,
            got: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(CodecError::TrailingBytes(bytes.len() - needed));
    }
    let f32_at = |at: usize| f32::from_le_bytes(body[at..at + 4].try_into().expect("4 bytes"));
    let joints = (0..count)
        .map(|i| {
            let at = 7 + JOINT_RECORD_LEN * i;
            JointSample {
                id: body[at],
                q: f32_at(at + 1),
                v: f32_at(at + 5),
            }
        })
        .collect();
    Ok(StatePacket {
        board_id: body[1],
        cycle: u32::from_le_bytes(body[2..6].try_into().expect("4 bytes")),
        joints,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum LawRecordError {
    #[error("law record for {dof} joints must be {expected} bytes, got {got}")]
    Length {
        dof: usize,
        expected: usize,
        got: usize,
    },
}

/// A law as it travels over the host link: single precision, no metadata
/// beyond the sequence number.
#[derive(Debug, Clone, PartialEq)]
pub struct LawRecord {
    pub sequence: u32,
    pub a: DMatrix<f32>,
    pub b: DVector<f32>,
}

impl LawRecord {
    pub fn encoded_len(dof: usize) -> usize {
        4 + 4 * (2 * dof * dof + dof)
    }

    pub fn from_law<T: Real>(law: &LinearFeedbackLaw<T>) -> Self {
        Self {
            sequence: law.sequence(),
            a: law.a().map(|v| v.as_f64() as f32),
            b: law.b().map(|v| v.as_f64() as f32),
        }
    }

    pub fn dof(&self) -> usize {
        self.b.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(Self::encoded_len(self.dof()));
        buf.extend_from_slice(&self.sequence.to_le_bytes());
        for r in 0..self.a.nrows() {
            for c in 0..self.a.ncols() {
                buf.extend_from_slice(&self.a[(r, c)].to_le_bytes());
            }
        }
        for v in self.b.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf
    }

    pub fn decode(bytes: &[u8], dof: usize) -> Result<Self, LawRecordError> {
        let expected = Self::encoded_len(dof);
        if bytes.len() != expected {
            return Err(LawRecordError::Length {
                dof,
                expected,
                got: bytes.len(),
            });
        }
        let mut words = bytes[4..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
        let a = DMatrix::from_row_iterator(dof, 2 * dof, words.by_ref().take(2 * dof * dof));
        let b = DVector::from_iterator(dof, words);
        Ok(Self {
            sequence: u32::from_le_bytes(bytes[..4].try_into().expect("4 bytes")),
            a,
            b,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_packet(rng: &mut ChaCha8Rng) -> StatePacket {
        let count = rng.random_range(0..=8);
        StatePacket {
            board_id: rng.random(),
            cycle: rng.random(),
            joints: (0..count)
                .map(|_| JointSample {
                    id: rng.random(),
                    q: f32::from_bits(rng.random::<u32>() & 0x7f7f_ffff),
                    v: rng.random_range(-100.0..100.0),
                })
                .collect(),
        }
    }

    fn reference_frame() -> Vec<u8> {
        encode_packet(&StatePacket {
            board_id: 1,
            cycle: 123_456,
            joints: vec![
                JointSample {
                    id: 2,
                    q: 0.7,
                    v: -1.25,
                },
                JointSample {
                    id: 3,
                    q: -1.4,
                    v: 0.5,
                },
            ],
        })
        .unwrap()
    }

    #[test]
    fn check_value() {
        assert_eq!(crc16(b"123456789"), 0x29B1);
    }

    #[test]
    fn empty_packet_layout() {
        let bytes = encode_packet(&StatePacket {
            board_id: 0,
            cycle: 0,
            joints: vec![],
        })
        .unwrap();
        assert_eq!(bytes.len(), 9);
        assert_eq!(&bytes[..7], &[0xA5, 0, 0, 0, 0, 0, 0]);
        assert_eq!(u16::from_le_bytes([bytes[7], bytes[8]]), crc16(&bytes[..7]));
    }

    #[test]
    fn byte_layout() {
        let bytes = reference_frame();
        assert_eq!(bytes.len(), 9 + 18);
        assert_eq!(bytes[0], 0xA5);
        assert_eq!(bytes[1], 1);
        assert_eq!(&bytes[2..6], &123_456u32.to_le_bytes());
        assert_eq!(bytes[6], 2);
        assert_eq!(bytes[7], 2);
        assert_eq!(&bytes[8..12], &0.7f32.to_le_bytes());
        assert_eq!(&bytes[12..16], &(-1.25f32).to_le_bytes());
        assert_eq!(bytes[16], 3);
    }

    #[test]
    fn roundtrip_corpus() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let p = random_packet(&mut rng);
            let bytes = encode_packet(&p).unwrap();
            assert_eq!(bytes.len(), p.encoded_len());
            assert_eq!(decode_packet(&bytes).unwrap(), p);
        }
    }

    #[test]
    fn every_single_bit_flip_is_a_crc_error() {
        let frame = reference_frame();
        for bit in 0..frame.len() * 8 {
            let mut bad = frame.clone();
            bad[bit / 8] ^= 1 << (bit % 8);
            assert!(
                matches!(decode_packet(&bad), Err(CodecError::BadCrc { .. })),
                "bit {bit}"
            );
        }
    }

    fn reseal(mut body: Vec<u8>) -> Vec<u8> {
        let crc = crc16(&body);
        body.extend_from_slice(&crc.to_le_bytes());
        body
    }

    #[test]
    fn distinct_errors() {
        let frame = reference_frame();
        assert!(matches!(
            decode_packet(&frame[..5]),
            Err(CodecError::Truncated { needed: 9, got: 5 })
        ));
        let mut body = frame[..frame.len() - 2].to_vec();
        body[0] = 0x5A;
        assert_eq!(
            decode_packet(&reseal(body.clone())),
            Err(CodecError::BadHeader(0x5A))
        );
        body[0] = HEADER;
        body[6] = 3;
        assert!(matches!(
            decode_packet(&reseal(body.clone())),
            Err(CodecError::Truncated {
                needed: 36,
                got: 27
            })
        ));
        body[6] = 1;
        assert_eq!(
            decode_packet(&reseal(body)),
            Err(CodecError::TrailingBytes(9))
        );
        let too_many = StatePacket {
            board_id: 0,
            cycle: 0,
            joints: vec![
                JointSample {
                    id: 0,
                    q: 0.0,
                    v: 0.0
                };
                256
            ],
        };
        assert_eq!(
            encode_packet(&too_many),
            Err(CodecError::TooManyJoints(256))
        );
    }

    #[test]
    fn law_record_roundtrip() {
        let a = DMatrix::from_fn(6, 12, |r, c| (r * 12 + c) as f32 * 0.5 - 3.0);
        let b = DVector::from_fn(6, |r, _| r as f32 - 2.5);
        let rec = LawRecord { sequence: 77, a, b };
        let bytes = rec.encode();
        assert_eq!(bytes.len(), 4 + 4 * (72 + 6));
        assert_eq!(&bytes[..4], &77u32.to_le_bytes());
        assert_eq!(&bytes[4..8], &(-3.0f32).to_le_bytes());
        assert_eq!(&bytes[8..12], &(-2.5f32).to_le_bytes());
        assert_eq!(LawRecord::decode(&bytes, 6).unwrap(), rec);
        assert!(LawRecord::decode(&bytes[1..], 6).is_err());
    }

    proptest! {
        #[test]
        fn decode_is_total(bytes in proptest::collection::vec(any::<u8>(), 0..=MAX_FRAME_LEN)) {
            let _ = decode_packet(&bytes);
        }

        #[test]
        fn resealed_random_bodies_decode_or_fail_typed(
            mut body in proptest::collection::vec(any::<u8>(), 7..64)
        ) {
            body[0] = HEADER;
            let frame = reseal(body);
            if let Ok(p) = decode_packet(&frame) {
                prop_assert_eq!(encode_packet(&p).unwrap(), frame);
            }
        }
    }
}
