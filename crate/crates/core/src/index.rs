//! Exact cosine top-k over one manual's chunk embeddings, plus the `.mbix`
//! on-disk format.
//!
//! File layout, all integers little-endian:
//!
//! ```text
//! "MBIX" | version: u8 = 1 | dim: u32 | count: u32
//! count × ( id_len: u32 | chunk_id: id_len bytes UTF-8 | dim × f32 )
//! SHA-256 of every preceding byte (32 bytes)
//! ```

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::embed::{cosine, EmbedError, Embedder, EmbeddingVector};
use crate::fsutil::atomic_write;
use crate::ingest::Chunk;

pub const MAGIC: &[u8; 4] = b"MBIX";
pub const FORMAT_VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 4 + 4;
const TRAILER_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("cannot build an index from zero chunks")]
    NoChunks,
    #[error("chunk {chunk_id} belongs to manual {found}, expected {expected}")]
    MixedManuals {
        chunk_id: String,
        expected: String,
        found: String,
    },
    #[error("embedding chunk {chunk_id}: {source}")]
    Embed {
        chunk_id: String,
        #[source]
        source: EmbedError,
    },
    #[error("query dimension {got} does not match index dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("k must be at least 1")]
    InvalidK,
    #[error("index file version {found} is not supported (expected {FORMAT_VERSION})")]
    FormatVersionMismatch { found: u8 },
    #[error("corrupt index file: {0}")]
    CorruptIndex(String),
    #[error("index i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexEntry {
    pub chunk_id: String,
    #[serde(serialize_with = "serialize_vector")]
    pub vector: EmbeddingVector,
}

fn serialize_vector<S: serde::Serializer>(v: &EmbeddingVector, s: S) -> Result<S::Ok, S::Error> {
    v.components().serialize(s)
}

/// Entries are kept in chunk ordinal order; an entry's position is its ordinal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VectorIndex {
    pub manual_id: String,
    pub dim: usize,
    pub entries: Vec<IndexEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalHit {
    pub chunk_id: String,
    pub ordinal: usize,
    pub score: f64,
    pub rank: usize,
}

pub fn build_index(chunks: &[Chunk], embedder: &dyn Embedder) -> Result<VectorIndex, IndexError> {
    let first = chunks.first().ok_or(IndexError::NoChunks)?;
    let manual_id = first.manual_id.clone();
    let mut entries = Vec::with_capacity(chunks.len());
    for chunk in chunks {
        if chunk.manual_id != manual_id {
            return Err(IndexError::MixedManuals {
                chunk_id: chunk.chunk_id.clone(),
                expected: manual_id,
                found: chunk.manual_id.clone(),
            });
        }
        let vector = embedder.embed(&chunk.text).map_err(|source| IndexError::Embed {
            chunk_id: chunk.chunk_id.clone(),
            source,
        })?;
        entries.push(IndexEntry {
            chunk_id: chunk.chunk_id.clone(),
            vector,
        });
    }
    let dim = entries[0].vector.dim();
    if let Some(bad) = entries.iter().find(|e| e.vector.dim() != dim) {
        return Err(IndexError::DimensionMismatch {
            expected: dim,
            got: bad.vector.dim(),
        });
    }
    Ok(VectorIndex {
        manual_id,
        dim,
        entries,
    })
}

impl VectorIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Brute-force cosine over every entry. Hits scoring below `min_score` are
    /// dropped; the rest are ordered by descending score, then ascending ordinal.
    pub fn search(
        &self,
        query: &EmbeddingVector,
        k: usize,
        min_score: f64,
    ) -> Result<Vec<RetrievalHit>, IndexError> {
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        if query.dim() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                got: query.dim(),
            });
        }
        let q = query.components();
        let mut scored: Vec<(f64, usize)> = self
            .entries
            .iter()
            .enumerate()
            .map(|(ordinal, e)| (cosine(q, e.vector.components()), ordinal))
            .filter(|&(score, _)| score >= min_score)
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        scored.truncate(k);
        Ok(scored
            .into_iter()
            .enumerate()
            .map(|(i, (score, ordinal))| RetrievalHit {
                chunk_id: self.entries[ordinal].chunk_id.clone(),
                ordinal,
                score,
                rank: i + 1,
            })
            .collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(
            HEADER_LEN + self.entries.len() * (4 + 16 + self.dim * 4) + TRAILER_LEN,
        );
        buf.extend_from_slice(MAGIC);
        buf.push(FORMAT_VERSION);
        buf.extend_from_slice(&(self.dim as u32).to_le_bytes());
        buf.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for entry in &self.entries {
            buf.extend_from_slice(&(entry.chunk_id.len() as u32).to_le_bytes());
            buf.extend_from_slice(entry.chunk_id.as_bytes());
            for x in entry.vector.components() {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);
        buf
    }

    /// Parse an `.mbix` file body. The format does not carry the manual id, so
    /// the caller supplies it.
    pub fn from_bytes(bytes: &[u8], manual_id: &str) -> Result<Self, IndexError> {
        if bytes.len() < HEADER_LEN + TRAILER_LEN {
            return Err(IndexError::CorruptIndex("file too short".into()));
        }
        if &bytes[..4] != MAGIC {
            return Err(IndexError::CorruptIndex("bad magic".into()));
        }
        if bytes[4] != FORMAT_VERSION {
            return Err(IndexError::FormatVersionMismatch { found: bytes[4] });
        }
        let (body, trailer) = bytes.split_at(bytes.len() - TRAILER_LEN);
        if Sha256::digest(body).as_slice() != trailer {
            return Err(IndexError::CorruptIndex("checksum mismatch".into()));
        }
        let mut cur = Cursor { buf: body, pos: 5 };
        let dim = cur.u32()? as usize;
        let count = cur.u32()? as usize;
        let mut entries = Vec::with_capacity(count.min(body.len() / 4));
        for _ in 0..count {
            let id_len = cur.u32()? as usize;
            let chunk_id = std::str::from_utf8(cur.take(id_len)?)
                .map_err(|_| IndexError::CorruptIndex("chunk id is not UTF-8".into()))?
                .to_string();
            let raw = cur.take(dim.checked_mul(4).ok_or_else(overflow)?)?;
            let components = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            entries.push(IndexEntry {
                chunk_id,
                vector: EmbeddingVector::from_raw_unchecked(components),
            });
        }
        if cur.pos != body.len() {
            return Err(IndexError::CorruptIndex("trailing bytes after entries".into()));
        }
        Ok(Self {
            manual_id: manual_id.to_string(),
            dim,
            entries,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        atomic_write(path, &self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path, manual_id: &str) -> Result<Self, IndexError> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes, manual_id)
    }
}

fn overflow() -> IndexError {
    IndexError::CorruptIndex("length overflow".into())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IndexError> {
        let end = self.pos.checked_add(n).ok_or_else(overflow)?;
        let slice = self
            .buf
            .get(self.pos..end)
            .ok_or_else(|| IndexError::CorruptIndex("unexpected end of data".into()))?;
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, IndexError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
