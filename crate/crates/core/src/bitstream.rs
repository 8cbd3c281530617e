//! Layered container for per-layer payloads.
//!
//! ```text
//! "EIDC" | version u8 = 1 | flags u8 | subject_id u8 | layer_count u8
//! repeated layer_count times: layer_id u8 | payload_len u32 LE | payload
//! [CRC32 (IEEE) over every byte after the magic, u32 LE]   if flags bit 0
//! ```
//!
//! Layers appear in increasing id order and always form a prefix of
//! `{1, 2, 3}`, so cutting a stream at any layer keeps it decodable.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::codec::LayerId;

const MAGIC: &[u8; 4] = b"EIDC";
const VERSION: u8 = 1;
const FLAG_CRC: u8 = 1;
pub const HEADER_LEN: usize = 8;
pub const RECORD_HEADER_LEN: usize = 5;
pub const CRC_LEN: usize = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ContainerError {
    #[error("layer set {0:?} is not a non-empty prefix of 1, 2, 3")]
    InvalidLayerSet(Vec<u8>),
    #[error("payload of layer {0} exceeds 4 GiB")]
    PayloadTooLarge(LayerId),
    #[error("container is truncated")]
    Truncated,
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported container version {0}")]
    Version(u8),
    #[error("unknown flag bits {0:#04x}")]
    Flags(u8),
    #[error("checksum mismatch")]
    Checksum,
    #[error("{0} unexpected trailing bytes")]
    Trailing(usize),
    #[error("cannot slice to layer {0}")]
    SliceTarget(u8),
    #[error("sample count must be positive")]
    ZeroSamples,
}

/// Decoded container contents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayeredBitstream {
    pub subject_id: u8,
    pub payloads: BTreeMap<LayerId, Vec<u8>>,
    pub crc: bool,
}

/// Summary of a container without copying payloads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContainerInfo {
    pub subject_id: u8,
    pub crc: bool,
    /// `(layer, payload bytes)` in stream order.
    pub layers: Vec<(LayerId, usize)>,
    pub total_bytes: usize,
}

fn check_layers<'a>(ids: impl Iterator<Item = &'a LayerId>) -> Result<(), ContainerError> {
    let ids: Vec<u8> = ids.map(|l| l.number()).collect();
    if ids.is_empty() || ids.iter().enumerate().any(|(i, &id)| id as usize != i + 1) {
        return Err(ContainerError::InvalidLayerSet(ids));
    }
    Ok(())
}

pub fn pack(payloads: &BTreeMap<LayerId, Vec<u8>>, subject_id: u8, with_crc: bool) -> Result<Vec<u8>, ContainerError> {
    check_layers(payloads.keys())?;
    let body: usize = payloads.values().map(|p| RECORD_HEADER_LEN + p.len()).sum();
    let mut out = Vec::with_capacity(HEADER_LEN + body + CRC_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[VERSION, if with_crc { FLAG_CRC } else { 0 }, subject_id, payloads.len() as u8]);
    for (&layer, p) in payloads {
        let len = u32::try_from(p.len()).map_err(|_| ContainerError::PayloadTooLarge(layer))?;
        out.push(layer.number());
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(p);
    }
    if with_crc {
        let crc = crc32fast::hash(&out[MAGIC.len()..]);
        out.extend_from_slice(&crc.to_le_bytes());
    }
    Ok(out)
}

/// Subject id, checksum flag and payload ranges into the parsed bytes.
type Parsed = (u8, bool, Vec<(LayerId, std::ops::Range<usize>)>);

fn parse(bytes: &[u8]) -> Result<Parsed, ContainerError> {
    if bytes.len() < HEADER_LEN {
        return Err(if bytes.len() >= 4 && &bytes[..4] != MAGIC {
            ContainerError::BadMagic
        } else {
            ContainerError::Truncated
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(ContainerError::BadMagic);
    }
    let (version, flags, subject_id, count) = (bytes[4], bytes[5], bytes[6], bytes[7] as usize);
    if version != VERSION {
        return Err(ContainerError::Version(version));
    }
    if flags & !FLAG_CRC != 0 {
        return Err(ContainerError::Flags(flags));
    }
    let crc = flags & FLAG_CRC != 0;
    let end = if crc {
        if bytes.len() < HEADER_LEN + CRC_LEN {
            return Err(ContainerError::Truncated);
        }
        let split = bytes.len() - CRC_LEN;
        let stored = u32::from_le_bytes(bytes[split..].try_into().expect("4 bytes"));
        if crc32fast::hash(&bytes[MAGIC.len()..split]) != stored {
            return Err(ContainerError::Checksum);
        }
        split
    } else {
        bytes.len()
    };
    let mut pos = HEADER_LEN;
    let mut layers = Vec::with_capacity(count);
    let mut ids = Vec::with_capacity(count);
    for _ in 0..count {
        if end - pos < RECORD_HEADER_LEN {
            return Err(ContainerError::Truncated);
        }
        let raw_id = bytes[pos];
        let len = u32::from_le_bytes(bytes[pos + 1..pos + 5].try_into().expect("4 bytes")) as usize;
        pos += RECORD_HEADER_LEN;
        if end - pos < len {
            return Err(ContainerError::Truncated);
        }
        ids.push(raw_id);
        let layer = LayerId::from_number(raw_id).ok_or_else(|| ContainerError::InvalidLayerSet(ids.clone()))?;
        layers.push((layer, pos..pos + len));
        pos += len;
    }
    if pos != end {
        return Err(ContainerError::Trailing(end - pos));
    }
    check_layers(layers.iter().map(|(l, _)| l))?;
    Ok((subject_id, crc, layers))
}

pub fn unpack(bytes: &[u8]) -> Result<LayeredBitstream, ContainerError> {
    let (subject_id, crc, layers) = parse(bytes)?;
    let payloads = layers.into_iter().map(|(l, r)| (l, bytes[r].to_vec())).collect();
    Ok(LayeredBitstream { subject_id, payloads, crc })
}

pub fn inspect(bytes: &[u8]) -> Result<ContainerInfo, ContainerError> {
    let (subject_id, crc, layers) = parse(bytes)?;
    Ok(ContainerInfo {
        subject_id,
        crc,
        layers: layers.into_iter().map(|(l, r)| (l, r.len())).collect(),
        total_bytes: bytes.len(),
    })
}

/// Keeps layers `1..=max_layer`; the checksum, if any, is recomputed.
pub fn slice(bytes: &[u8], max_layer: u8) -> Result<Vec<u8>, ContainerError> {
    if max_layer == 0 {
        return Err(ContainerError::SliceTarget(max_layer));
    }
    let mut stream = unpack(bytes)?;
    stream.payloads.retain(|l, _| l.number() <= max_layer);
    pack(&stream.payloads, stream.subject_id, stream.crc)
}

/// Bits per sample, `bits / samples`.
pub fn compute_bps(total_bits: u64, samples: u64) -> Result<f64, ContainerError> {
    if samples == 0 {
        return Err(ContainerError::ZeroSamples);
    }
    Ok(total_bits as f64 / samples as f64)
}

impl LayeredBitstream {
    /// Payload bits, optionally with the container framing the payloads
    /// need (header, per-layer records and checksum).
    pub fn bits(&self, include_headers: bool) -> u64 {
        let payload: usize = self.payloads.values().map(Vec::len).sum();
        let framing = if include_headers {
            HEADER_LEN + RECORD_HEADER_LEN * self.payloads.len() + if self.crc { CRC_LEN } else { 0 }
        } else {
            0
        };
        8 * (payload + framing) as u64
    }

    pub fn bps(&self, samples: u64, include_headers: bool) -> Result<f64, ContainerError> {
        compute_bps(self.bits(include_headers), samples)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn payloads(sizes: &[usize]) -> BTreeMap<LayerId, Vec<u8>> {
        sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| (LayerId::ALL[i], (0..n).map(|b| (b * 31 + i) as u8).collect()))
            .collect()
    }

    #[test]
    fn header_arithmetic() {
        assert_eq!(pack(&payloads(&[123]), 0, false).unwrap().len(), 8 + 5 + 123);
        assert_eq!(pack(&payloads(&[123]), 0, true).unwrap().len(), 8 + 5 + 123 + 4);
    }

    #[test]
    fn golden_vector() {
        let mut p = BTreeMap::new();
        p.insert(LayerId::Label, vec![0xAB, 0xCD]);
        let bytes = pack(&p, 3, false).unwrap();
        assert_eq!(bytes, [b'E', b'I', b'D', b'C', 1, 0, 3, 1, 1, 2, 0, 0, 0, 0xAB, 0xCD]);
        let with_crc = pack(&p, 3, true).unwrap();
        let crc = crc32fast::hash(&[1, 1, 3, 1, 1, 2, 0, 0, 0, 0xAB, 0xCD]);
        assert_eq!(&with_crc[with_crc.len() - 4..], crc.to_le_bytes());
    }

    #[test]
    fn layer_sets() {
        let mut p = payloads(&[1, 2, 3]);
        p.remove(&LayerId::Label);
        assert!(matches!(pack(&p, 0, false), Err(ContainerError::InvalidLayerSet(_))));
        assert!(pack(&BTreeMap::new(), 0, false).is_err());
        let mut p = payloads(&[1, 2, 3]);
        p.remove(&LayerId::Caption);
        assert!(pack(&p, 0, false).is_err());
    }

    #[test]
    fn slicing() {
        let full = pack(&payloads(&[10, 20, 30]), 9, true).unwrap();
        let one = unpack(&slice(&full, 1).unwrap()).unwrap();
        assert_eq!(one.payloads.len(), 1);
        assert_eq!(one.payloads[&LayerId::Label], payloads(&[10])[&LayerId::Label]);
        assert_eq!(slice(&full, 3).unwrap(), full);
        assert_eq!(slice(&full, 200).unwrap(), full);
        assert_eq!(slice(&full, 0), Err(ContainerError::SliceTarget(0)));
        assert_eq!(slice(&slice(&full, 2).unwrap(), 1).unwrap(), slice(&full, 1).unwrap());
    }

    #[test]
    fn rejects_bad_headers() {
        let good = pack(&payloads(&[4]), 0, false).unwrap();
        let mut b = good.clone();
        b[0] = b'X';
        assert_eq!(unpack(&b), Err(ContainerError::BadMagic));
        let mut b = good.clone();
        b[4] = 2;
        assert_eq!(unpack(&b), Err(ContainerError::Version(2)));
        let mut b = good.clone();
        b[5] = 0x80;
        assert_eq!(unpack(&b), Err(ContainerError::Flags(0x80)));
        let mut b = good.clone();
        b.push(0);
        assert_eq!(unpack(&b), Err(ContainerError::Trailing(1)));
        let mut b = good;
        b[8] = 7;
        assert!(matches!(unpack(&b), Err(ContainerError::InvalidLayerSet(_))));
    }

    #[test]
    fn bps_accounting() {
        assert!((compute_bps(980, 56320).unwrap() - 0.017400).abs() < 5e-5);
        assert_eq!(compute_bps(0, 56320).unwrap(), 0.0);
        assert_eq!(compute_bps(1, 0), Err(ContainerError::ZeroSamples));
        let s = unpack(&pack(&payloads(&[10, 20]), 0, true).unwrap()).unwrap();
        assert_eq!(s.bits(false), 240);
        assert_eq!(s.bits(true), 240 + 8 * (8 + 10 + 4));
        let l1 = unpack(&pack(&payloads(&[10]), 0, true).unwrap()).unwrap().bps(100, false).unwrap();
        let l2 = 20.0 * 8.0 / 100.0;
        assert!((s.bps(100, false).unwrap() - (l1 + l2)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn round_trip(sizes in prop::collection::vec(0usize..300, 1..=3), subject in any::<u8>(), crc in any::<bool>()) {
            let p = payloads(&sizes);
            let bytes = pack(&p, subject, crc).unwrap();
            let back = unpack(&bytes).unwrap();
            prop_assert_eq!(&back.payloads, &p);
            prop_assert_eq!(back.subject_id, subject);
            let info = inspect(&bytes).unwrap();
            prop_assert_eq!(info.layers.len(), sizes.len());
            for cut in 0..bytes.len() {
                prop_assert!(unpack(&bytes[..cut]).is_err());
            }
        }

        #[test]
        fn single_byte_corruption_is_detected(sizes in prop::collection::vec(0usize..64, 1..=3), pos in any::<prop::sample::Index>(), flip in 1u8..=255) {
            let bytes = pack(&payloads(&sizes), 1, true).unwrap();
            let mut bad = bytes.clone();
            let i = pos.index(bad.len());
            bad[i] ^= flip;
            prop_assert!(unpack(&bad).is_err());
        }

        #[test]
        fn nested_slices(sizes in prop::collection::vec(0usize..50, 3), k in 1u8..=3, j in 1u8..=3) {
            prop_assume!(j <= k);
            let s = pack(&payloads(&sizes), 0, true).unwrap();
            prop_assert_eq!(slice(&slice(&s, k).unwrap(), j).unwrap(), slice(&s, j).unwrap());
        }
    }
}
