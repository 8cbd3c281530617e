//! `EEGD` dataset files: magic, `version u8 = 1`, `channels u16`,
//! `samples u32`, `sample_rate u32`, `record_count u32`, then per record
//! `class_id u16`, `subject_id u8` and channels × samples f32, channel-major.
//! All integers little endian.

use std::io::{Read, Write};
use std::path::Path;

use super::{BrainSignal, DataError, DatasetManifest};

const MAGIC: &[u8; 4] = b"EEGD";
const VERSION: u8 = 1;
const FILE: &str = "EEGD";

fn format(reason: impl Into<String>) -> DataError {
    DataError::Format { file: FILE, reason: reason.into() }
}

pub fn write_signals<W: Write>(w: &mut W, signals: &[BrainSignal]) -> crate::Result<()> {
    let (channels, samples, rate) = match signals.first() {
        Some(s) => (s.channels(), s.samples(), s.sample_rate_hz),
        None => return Err(format("cannot store an empty dataset").into()),
    };
    if channels > u16::MAX as usize || samples > u32::MAX as usize {
        return Err(format(format!("shape {channels}×{samples} does not fit the header")).into());
    }
    if signals.len() > u32::MAX as usize {
        return Err(format("too many records").into());
    }
    for (i, s) in signals.iter().enumerate() {
        if (s.channels(), s.samples(), s.sample_rate_hz) != (channels, samples, rate) {
            return Err(format(format!("record {i} differs in shape or sample rate")).into());
        }
        if s.class_id > u16::MAX as u32 || s.subject_id > u8::MAX as u32 {
            return Err(format(format!("record {i} ids do not fit u16/u8")).into());
        }
    }
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION])?;
    w.write_all(&(channels as u16).to_le_bytes())?;
    w.write_all(&(samples as u32).to_le_bytes())?;
    w.write_all(&rate.to_le_bytes())?;
    w.write_all(&(signals.len() as u32).to_le_bytes())?;
    let mut buf = Vec::with_capacity(channels * samples * 4 + 3);
    for s in signals {
        buf.clear();
        buf.extend_from_slice(&(s.class_id as u16).to_le_bytes());
        buf.push(s.subject_id as u8);
        for &v in s.data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_signals<R: Read>(r: &mut R) -> Result<Vec<BrainSignal>, DataError> {
    let mut header = [0u8; 19];
    r.read_exact(&mut header).map_err(|_| DataError::Truncated { file: FILE })?;
    if &header[..4] != MAGIC {
        return Err(format("bad magic"));
    }
    if header[4] != VERSION {
        return Err(format(format!("unsupported version {}", header[4])));
    }
    let channels = u16::from_le_bytes([header[5], header[6]]) as usize;
    let samples = u32::from_le_bytes(header[7..11].try_into().expect("4 bytes")) as usize;
    let rate = u32::from_le_bytes(header[11..15].try_into().expect("4 bytes"));
    let count = u32::from_le_bytes(header[15..19].try_into().expect("4 bytes")) as usize;
    let values = channels.checked_mul(samples).ok_or_else(|| format("record size overflows"))?;
    let mut record = vec![0u8; 3 + values * 4];
    let mut signals = Vec::with_capacity(count.min(1 << 16));
    for i in 0..count {
        r.read_exact(&mut record).map_err(|_| DataError::Truncated { file: FILE })?;
        let class_id = u16::from_le_bytes([record[0], record[1]]) as u32;
        let subject_id = record[2] as u32;
        let data = record[3..].chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
        let s = BrainSignal::new(channels, samples, data, class_id, subject_id, rate)
            .map_err(|e| format(format!("record {i}: {e}")))?;
        signals.push(s);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| format(e.to_string()))? != 0 {
        return Err(format("trailing bytes after the last record"));
    }
    Ok(signals)
}

pub fn save_signals(path: &Path, signals: &[BrainSignal]) -> crate::Result<()> {
    let mut buf = Vec::new();
    write_signals(&mut buf, signals)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_signals(path: &Path) -> crate::Result<Vec<BrainSignal>> {
    let bytes = std::fs::read(path)?;
    Ok(read_signals(&mut bytes.as_slice())?)
}

/// Writes the records and their JSON manifest.
pub fn save_dataset(
    path: &Path,
    manifest_path: &Path,
    signals: &[BrainSignal],
    manifest: &DatasetManifest,
) -> crate::Result<()> {
    manifest.validate(signals)?;
    save_signals(path, signals)?;
    manifest.save(manifest_path)
}

/// Loads records in file order and checks the manifest covers them.
pub fn load_dataset(path: &Path, manifest_path: &Path) -> crate::Result<(Vec<BrainSignal>, DatasetManifest)> {
    let signals = load_signals(path)?;
    let manifest = DatasetManifest::load(manifest_path)?;
    manifest.validate(&signals)?;
    Ok((signals, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two() -> Vec<BrainSignal> {
        vec![
            BrainSignal::new(2, 3, vec![0.5, -1.25, 3.0, 1e-3, 7.0, -0.1], 4, 1, 1000).unwrap(),
            BrainSignal::new(2, 3, vec![1.0; 6], 2, 5, 1000).unwrap(),
        ]
    }

    #[test]
    fn round_trip_in_order() {
        let mut buf = Vec::new();
        write_signals(&mut buf, &two()).unwrap();
        assert_eq!(buf.len(), 19 + 2 * (3 + 6 * 4));
        let back = read_signals(&mut buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!((back[0].class_id, back[0].subject_id, back[1].class_id), (4, 1, 2));
        let widened: Vec<f64> = two()[0].data().iter().map(|v| *v as f32 as f64).collect();
        assert_eq!(back[0].data(), widened.as_slice());
        let mut again = Vec::new();
        write_signals(&mut again, &back).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn header_count_beyond_records_is_truncation() {
        let mut buf = Vec::new();
        write_signals(&mut buf, &two()).unwrap();
        buf[15] = 3;
        assert_eq!(read_signals(&mut buf.as_slice()), Err(DataError::Truncated { file: "EEGD" }));
    }

    #[test]
    fn bad_header_fields() {
        let mut buf = Vec::new();
        write_signals(&mut buf, &two()).unwrap();
        let mut bad = buf.clone();
        bad[1] = b'X';
        assert!(matches!(read_signals(&mut bad.as_slice()), Err(DataError::Format { .. })));
        let mut bad = buf.clone();
        bad[4] = 2;
        assert!(matches!(read_signals(&mut bad.as_slice()), Err(DataError::Format { .. })));
        let mut long = buf;
        long.push(0);
        assert!(read_signals(&mut long.as_slice()).is_err());
    }

    #[test]
    fn mixed_shapes_are_rejected() {
        let mut s = two();
        s.push(BrainSignal::new(1, 6, vec![0.0; 6], 0, 0, 1000).unwrap());
        assert!(write_signals(&mut Vec::new(), &s).is_err());
    }
}
