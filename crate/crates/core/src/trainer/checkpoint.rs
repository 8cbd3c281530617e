//! `EIDW` weight files.
//!
//! ```text
//! "EIDW" | version u8 = 1
//! meta_len u32 LE | UTF-8 JSON: layout, selection epoch, validation scores,
//!                   config and its hash, per-channel medians
//! parameter table (count, then name/shape/f32 values per tensor)
//! has_tables u8 | [probability tables: count u32, per channel offset i16,
//!                  length u16, length × u16]
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::codec::{CodecArch, LayerCodec};
use crate::entropy::{support_offset, PmfTable};
use crate::neural::{read_param_table, write_param_table, NeuralError, Parameterized};

const MAGIC: &[u8; 4] = b"EIDW";
const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub epoch: usize,
    pub val_loss: f64,
    pub val_rate_bits: f64,
    pub val_distortion: f64,
    pub config_hash: String,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub codec: LayerCodec,
    pub meta: CheckpointMeta,
}

#[derive(Serialize, Deserialize)]
struct FileMeta {
    arch: CodecArch,
    medians: Option<Vec<i32>>,
    #[serde(flatten)]
    meta: CheckpointMeta,
}

fn format(reason: impl Into<String>) -> crate::Error {
    NeuralError::Format(reason.into()).into()
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, w: &mut W) -> crate::Result<()> {
        let meta = FileMeta {
            arch: self.codec.arch().clone(),
            medians: self.codec.medians().map(<[i32]>::to_vec),
            meta: self.meta.clone(),
        };
        let json = serde_json::to_vec(&meta)?;
        w.write_all(MAGIC)?;
        w.write_all(&[VERSION])?;
        w.write_all(&(json.len() as u32).to_le_bytes())?;
        w.write_all(&json)?;
        write_param_table(w, &self.codec.params())?;
        match self.codec.tables() {
            Some(t) => {
                w.write_all(&[1])?;
                t.write_to(w)?;
            }
            None => w.write_all(&[0])?,
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> crate::Result<Self> {
        let mut head = [0u8; 9];
        r.read_exact(&mut head).map_err(|_| format("truncated header"))?;
        if &head[..4] != MAGIC {
            return Err(format("bad magic"));
        }
        if head[4] != VERSION {
            return Err(format(format!("unsupported version {}", head[4])));
        }
        let len = u32::from_le_bytes(head[5..9].try_into().expect("4 bytes")) as usize;
        let mut json = vec![0u8; len];
        r.read_exact(&mut json).map_err(|_| format("truncated metadata"))?;
        let meta: FileMeta = serde_json::from_slice(&json).map_err(|e| format(format!("metadata: {e}")))?;
        let params = read_param_table(r)?;
        let mut codec = LayerCodec::from_params(meta.arch, params).map_err(|e| format(e.to_string()))?;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag).map_err(|_| format("truncated table flag"))?;
        match (flag[0], meta.medians) {
            (0, None) => {}
            (1, Some(medians)) => {
                let tables = PmfTable::read_from(r).map_err(|e| format(format!("tables: {e}")))?;
                let consistent = medians.len() == tables.len()
                    && medians.iter().zip(tables.channels()).all(|(m, ch)| ch.offset() == support_offset(*m));
                if !consistent {
                    return Err(format("tables do not match the stored medians"));
                }
                codec.set_tables(medians, tables).map_err(|e| format(e.to_string()))?;
            }
            _ => return Err(format("table flag disagrees with metadata")),
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(format("trailing bytes"));
        }
        Ok(Checkpoint { codec, meta: meta.meta })
    }

    pub fn save(&self, path: &Path) -> crate::Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> crate::Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::read_from(&mut bytes.as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{ArchScale, LayerId};

    fn checkpoint(layer: LayerId) -> Checkpoint {
        let mut config = TrainConfig::new(layer);
        config.arch = ArchScale::compact(3, 16);
        let mut codec = LayerCodec::new(config.arch.arch(layer), 4).unwrap();
        codec.snap_to_f32();
        codec.set_medians((0..codec.latent_width() as i32).map(|i| i % 5 - 2).collect()).unwrap();
        let meta = CheckpointMeta {
            epoch: 3,
            val_loss: 1.5,
            val_rate_bits: 1.0,
            val_distortion: 0.5,
            config_hash: config.hash(),
            config,
        };
        Checkpoint { codec, meta }
    }

    #[test]
    fn round_trip_is_exact() {
        for layer in LayerId::ALL {
            let c = checkpoint(layer);
            let mut buf = Vec::new();
            c.write_to(&mut buf).unwrap();
            assert_eq!(Checkpoint::read_from(&mut buf.as_slice()).unwrap(), c);
        }
    }

    #[test]
    fn without_tables() {
        let mut c = checkpoint(LayerId::Label);
        c.codec.clear_tables();
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        assert_eq!(Checkpoint::read_from(&mut buf.as_slice()).unwrap(), c);
    }

    #[test]
    fn damaged_files_are_rejected() {
        let c = checkpoint(LayerId::Label);
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        for cut in [0, 3, 8, 20, buf.len() / 2, buf.len() - 1] {
            let err = Checkpoint::read_from(&mut &buf[..cut]).unwrap_err();
            assert_eq!(err.kind(), crate::ErrorKind::Data, "cut {cut}: {err}");
        }
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(Checkpoint::read_from(&mut bad.as_slice()).is_err());
        let mut long = buf;
        long.push(0);
        assert!(Checkpoint::read_from(&mut long.as_slice()).is_err());
    }
}
