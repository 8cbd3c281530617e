//! Embedding databases and retrieval classification.
//!
//! File layout (little endian): magic `EMBD`, version `u8 = 1`, `dim u16`,
//! `count u32`, then per entry `class_id u32`, `text_len u16`, UTF-8 text
//! and `dim` × f32.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

const MAGIC: &[u8; 4] = b"EMBD";
const VERSION: u8 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RetrievalError {
    #[error("malformed embedding file: {0}")]
    Format(String),
    #[error("duplicate class id {0}")]
    DuplicateClass(u32),
    #[error("embedding of class {0} has zero norm")]
    ZeroNorm(u32),
    #[error("embedding width {found} does not match database width {expected}")]
    Width { expected: usize, found: usize },
    #[error("query has zero norm")]
    ZeroQuery,
    #[error("query contains non-finite values")]
    NonFiniteQuery,
    #[error("database is empty")]
    Empty,
    #[error("class {0} not in database")]
    UnknownClass(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub class_id: u32,
    pub text: String,
    pub embedding: Vec<f64>,
}

/// Id-keyed embeddings of fixed width. Values are held at f32 precision so
/// a save/load cycle is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDatabase {
    dim: usize,
    entries: Vec<Entry>,
    unit: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassPrediction {
    pub class_id: u32,
    pub score: f64,
    /// `(class_id, cosine)` best first; ties go to the lower id.
    pub ranking: Vec<(u32, f64)>,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl EmbeddingDatabase {
    pub fn new(dim: usize, entries: Vec<Entry>) -> Result<Self, RetrievalError> {
        if dim == 0 || dim > u16::MAX as usize {
            return Err(RetrievalError::Format(format!("width {dim} outside 1..=65535")));
        }
        let mut seen = BTreeSet::new();
        let mut unit = Vec::with_capacity(entries.len());
        let mut stored = Vec::with_capacity(entries.len());
        for mut e in entries {
            if !seen.insert(e.class_id) {
                return Err(RetrievalError::DuplicateClass(e.class_id));
            }
            if e.embedding.len() != dim {
                return Err(RetrievalError::Width { expected: dim, found: e.embedding.len() });
            }
            if e.text.len() > u16::MAX as usize {
                return Err(RetrievalError::Format(format!("text of class {} is too long", e.class_id)));
            }
            if e.embedding.iter().any(|v| !v.is_finite() || v.abs() > f32::MAX as f64) {
                return Err(RetrievalError::Format(format!("class {} has non-finite values", e.class_id)));
            }
            e.embedding.iter_mut().for_each(|v| *v = *v as f32 as f64);
            let n = norm(&e.embedding);
            if n == 0.0 {
                return Err(RetrievalError::ZeroNorm(e.class_id));
            }
            unit.push(e.embedding.iter().map(|v| v / n).collect());
            stored.push(e);
        }
        Ok(EmbeddingDatabase { dim, entries: stored, unit })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn get(&self, class_id: u32) -> Option<&Entry> {
        self.entries.iter().find(|e| e.class_id == class_id)
    }

    pub fn embedding(&self, class_id: u32) -> Result<&[f64], RetrievalError> {
        self.get(class_id).map(|e| e.embedding.as_slice()).ok_or(RetrievalError::UnknownClass(class_id))
    }

    /// Ranks all entries by cosine similarity to `query` and keeps the best
    /// `k` (at least one).
    pub fn classify(&self, query: &[f64], k: usize) -> Result<ClassPrediction, RetrievalError> {
        if self.entries.is_empty() {
            return Err(RetrievalError::Empty);
        }
        if query.len() != self.dim {
            return Err(RetrievalError::Width { expected: self.dim, found: query.len() });
        }
        if query.iter().any(|v| !v.is_finite()) {
            return Err(RetrievalError::NonFiniteQuery);
        }
        let qn = norm(query);
        if qn == 0.0 {
            return Err(RetrievalError::ZeroQuery);
        }
        let mut ranking: Vec<(u32, f64)> = self
            .entries
            .iter()
            .zip(&self.unit)
            .map(|(e, u)| (e.class_id, u.iter().zip(query).map(|(a, b)| a * b).sum::<f64>() / qn))
            .collect();
        ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranking.truncate(k.max(1));
        let (class_id, score) = ranking[0];
        Ok(ClassPrediction { class_id, score, ranking })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&[VERSION])?;
        w.write_all(&(self.dim as u16).to_le_bytes())?;
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for e in &self.entries {
            w.write_all(&e.class_id.to_le_bytes())?;
            w.write_all(&(e.text.len() as u16).to_le_bytes())?;
            w.write_all(e.text.as_bytes())?;
            for &v in &e.embedding {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, RetrievalError> {
        fn take<R: Read, const N: usize>(r: &mut R, what: &str) -> Result<[u8; N], RetrievalError> {
            let mut b = [0u8; N];
            r.read_exact(&mut b).map_err(|_| RetrievalError::Format(format!("truncated {what}")))?;
            Ok(b)
        }
        if &take::<_, 4>(r, "magic")? != MAGIC {
            return Err(RetrievalError::Format("bad magic".into()));
        }
        let [version] = take::<_, 1>(r, "version")?;
        if version != VERSION {
            return Err(RetrievalError::Format(format!("unsupported version {version}")));
        }
        let dim = u16::from_le_bytes(take(r, "header")?) as usize;
        let count = u32::from_le_bytes(take(r, "header")?) as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 16));
        for i in 0..count {
            let class_id = u32::from_le_bytes(take(r, "entry header")?);
            let len = u16::from_le_bytes(take(r, "entry header")?) as usize;
            let mut text = vec![0u8; len];
            r.read_exact(&mut text).map_err(|_| RetrievalError::Format(format!("truncated text of entry {i}")))?;
            let text =
                String::from_utf8(text).map_err(|_| RetrievalError::Format(format!("entry {i} text is not UTF-8")))?;
            let mut raw = vec![0u8; dim * 4];
            r.read_exact(&mut raw).map_err(|_| RetrievalError::Format(format!("truncated embedding of entry {i}")))?;
            let embedding = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
            entries.push(Entry { class_id, text, embedding });
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(|e| RetrievalError::Format(e.to_string()))? != 0 {
            return Err(RetrievalError::Format("trailing bytes".into()));
        }
        EmbeddingDatabase::new(dim, entries)
    }

    pub fn load(path: &Path) -> crate::Result<Self> {
        let bytes = std::fs::read(path)?;
        Ok(Self::read_from(&mut bytes.as_slice())?)
    }

    pub fn save(&self, path: &Path) -> crate::Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }
}
