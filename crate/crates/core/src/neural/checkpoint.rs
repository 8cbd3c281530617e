//! Named parameter table used inside weight files.
//!
//! ```text
//! count u32 LE
//! per entry: name_len u16 LE, UTF-8 name, rank u8, rank × dim u32 LE,
//!            product(dims) × f32 LE
//! ```

use std::io::{Read, Write};

use super::{NeuralError, Param};

pub fn write_param_table<W: Write>(w: &mut W, params: &[&Param]) -> std::io::Result<()> {
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for p in params {
        let name = p.name.as_bytes();
        let name_len = u16::try_from(name.len())
            .map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidInput, "parameter name too long"))?;
        w.write_all(&name_len.to_le_bytes())?;
        w.write_all(name)?;
        w.write_all(&[p.shape.len() as u8])?;
        for &d in &p.shape {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(p.len() * 4);
        for &v in &p.value {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<(), NeuralError> {
    r.read_exact(buf).map_err(|_| NeuralError::Format(format!("truncated while reading {what}")))
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32, NeuralError> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_param_table<R: Read>(r: &mut R) -> Result<Vec<Param>, NeuralError> {
    let count = read_u32(r, "parameter count")? as usize;
    let mut params = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let mut b2 = [0u8; 2];
        read_exact(r, &mut b2, "name length")?;
        let mut name = vec![0u8; u16::from_le_bytes(b2) as usize];
        read_exact(r, &mut name, "name")?;
        let name = String::from_utf8(name).map_err(|_| NeuralError::Format("parameter name is not UTF-8".into()))?;
        let mut rank = [0u8; 1];
        read_exact(r, &mut rank, "rank")?;
        let mut shape = Vec::with_capacity(rank[0] as usize);
        for _ in 0..rank[0] {
            shape.push(read_u32(r, "dimension")? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n < (1 << 31))
            .ok_or_else(|| NeuralError::Format(format!("{name}: implausible shape {shape:?}")))?;
        let mut raw = vec![0u8; n * 4];
        read_exact(r, &mut raw, &name)?;
        let value = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
        params.push(Param::new(name, shape, value));
    }
    Ok(params)
}
