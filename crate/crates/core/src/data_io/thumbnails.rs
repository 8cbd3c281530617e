//! `THMB` files: magic, `version u8 = 1`, `count u32`, then `count`
//! thumbnails of 32×32×3 f32 values (row-major, interleaved RGB), little
//! endian. Entry `i` belongs to record `i`.

use std::io::{Read, Write};
use std::path::Path;

use super::DataError;
use crate::codec::{Thumbnail, THUMBNAIL_LEN};

const MAGIC: &[u8; 4] = b"THMB";
const VERSION: u8 = 1;
const FILE: &str = "THMB";

pub fn write_thumbnails<W: Write>(w: &mut W, thumbs: &[Thumbnail]) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION])?;
    w.write_all(&(thumbs.len() as u32).to_le_bytes())?;
    for t in thumbs {
        for &v in t.data() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_thumbnails<R: Read>(r: &mut R) -> Result<Vec<Thumbnail>, DataError> {
    let format = |reason: &str| DataError::Format { file: FILE, reason: reason.into() };
    let mut header = [0u8; 9];
    r.read_exact(&mut header).map_err(|_| DataError::Truncated { file: FILE })?;
    if &header[..4] != MAGIC {
        return Err(format("bad magic"));
    }
    if header[4] != VERSION {
        return Err(format("unsupported version"));
    }
    let count = u32::from_le_bytes(header[5..9].try_into().expect("4 bytes")) as usize;
    let mut raw = vec![0u8; THUMBNAIL_LEN * 4];
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        r.read_exact(&mut raw).map_err(|_| DataError::Truncated { file: FILE })?;
        let data: Vec<f64> = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(format("thumbnail values must lie in [0, 1]"));
        }
        out.push(Thumbnail::new(data).map_err(|e| format(&e.to_string()))?);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| format(&e.to_string()))? != 0 {
        return Err(format("trailing bytes"));
    }
    Ok(out)
}

pub fn save_thumbnails(path: &Path, thumbs: &[Thumbnail]) -> crate::Result<()> {
    let mut buf = Vec::new();
    write_thumbnails(&mut buf, thumbs)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_thumbnails(path: &Path) -> crate::Result<Vec<Thumbnail>> {
    let bytes = std::fs::read(path)?;
    Ok(read_thumbnails(&mut bytes.as_slice())?)
}
