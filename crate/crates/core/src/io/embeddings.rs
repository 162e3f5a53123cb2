//! Binary embedding sidecar.
//!
//! Keeps large vectors out of the text files. Layout, little-endian:
//!
//! ```text
//! magic    8 bytes  "ERUEMB1\0"
//! dim      u32
//! count    u32
//! entry x count:
//!   id_len u16, image id bytes (UTF-8)
//!   role   u8   (0 = h2f candidate, 1 = w2f candidate, 2 = text query)
//!   rank   u16  (candidate rank; 0 for text entries)
//!   values dim x f32
//! ```
//!
//! Entries are written in key order, so identical stores produce identical
//! bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::ensemble::ModelSource;

use super::FormatError;

const MAGIC: &[u8; 8] = b"ERUEMB1\0";

/// What an embedding vector describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EmbeddingRole {
    H2F,
    W2F,
    Text,
}

impl EmbeddingRole {
    fn to_byte(self) -> u8 {
        match self {
            EmbeddingRole::H2F => 0,
            EmbeddingRole::W2F => 1,
            EmbeddingRole::Text => 2,
        }
    }

    fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(EmbeddingRole::H2F),
            1 => Some(EmbeddingRole::W2F),
            2 => Some(EmbeddingRole::Text),
            _ => None,
        }
    }
}

impl From<ModelSource> for EmbeddingRole {
    fn from(m: ModelSource) -> Self {
        match m {
            ModelSource::H2F => EmbeddingRole::H2F,
            ModelSource::W2F => EmbeddingRole::W2F,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EmbeddingKey {
    pub image_id: String,
    pub role: EmbeddingRole,
    pub rank: u16,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EmbeddingStoreError {
    #[error("embedding has dimension {found}, store expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("duplicate embedding entry for {image_id}/{role:?}/{rank}")]
    Duplicate {
        image_id: String,
        role: EmbeddingRole,
        rank: u16,
    },
    #[error("image id longer than 65535 bytes")]
    IdTooLong,
}

/// In-memory embedding table with a fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    entries: BTreeMap<EmbeddingKey, Vec<f64>>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: BTreeMap::new(),
        }
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

    pub fn insert(
        &mut self,
        image_id: &str,
        role: EmbeddingRole,
        rank: u16,
        values: Vec<f64>,
    ) -> Result<(), EmbeddingStoreError> {
        if values.len() != self.dim {
            return Err(EmbeddingStoreError::DimensionMismatch {
                expected: self.dim,
                found: values.len(),
            });
        }
        if image_id.len() > u16::MAX as usize {
            return Err(EmbeddingStoreError::IdTooLong);
        }
        let key = EmbeddingKey {
            image_id: image_id.to_string(),
            role,
            rank,
        };
        if self.entries.contains_key(&key) {
            return Err(EmbeddingStoreError::Duplicate {
                image_id: key.image_id,
                role,
                rank,
            });
        }
        self.entries.insert(key, values);
        Ok(())
    }

    pub fn get(&self, image_id: &str, role: EmbeddingRole, rank: u16) -> Option<&[f64]> {
        let key = EmbeddingKey {
            image_id: image_id.to_string(),
            role,
            rank,
        };
        self.entries.get(&key).map(Vec::as_slice)
    }

    pub fn get_text(&self, image_id: &str) -> Option<&[f64]> {
        self.get(image_id, EmbeddingRole::Text, 0)
    }

    /// Serializes the store; values are stored as f32.
    pub fn write(&self, path: &Path) -> Result<(), FormatError> {
        let mut buf = Vec::with_capacity(16 + self.entries.len() * (8 + self.dim * 4));
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(self.dim as u32).to_le_bytes());
        buf.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (key, values) in &self.entries {
            buf.extend_from_slice(&(key.image_id.len() as u16).to_le_bytes());
            buf.extend_from_slice(key.image_id.as_bytes());
            buf.push(key.role.to_byte());
            buf.extend_from_slice(&key.rank.to_le_bytes());
            for v in values {
                buf.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        fs::write(path, buf).map_err(|source| FormatError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<Self, FormatError> {
        let corrupt = |message: &str| FormatError::Corrupt {
            path: path.to_path_buf(),
            message: message.to_string(),
        };
        let bytes = fs::read(path).map_err(|source| FormatError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cursor = Cursor {
            bytes: &bytes,
            pos: 0,
        };

        if cursor.take(8).ok_or_else(|| corrupt("truncated magic"))? != MAGIC {
            return Err(corrupt("bad magic; not an embedding sidecar"));
        }
        let dim = cursor.u32().ok_or_else(|| corrupt("truncated dimension"))? as usize;
        let count = cursor.u32().ok_or_else(|| corrupt("truncated count"))? as usize;
        if dim == 0 || dim > 1 << 20 {
            return Err(corrupt("unreasonable embedding dimension"));
        }

        let mut store = Self::new(dim);
        for i in 0..count {
            let id_len = cursor
                .u16()
                .ok_or_else(|| corrupt("truncated entry header"))?
                as usize;
            let id_bytes = cursor
                .take(id_len)
                .ok_or_else(|| corrupt("truncated image id"))?;
            let image_id = std::str::from_utf8(id_bytes)
                .map_err(|_| corrupt("image id is not valid UTF-8"))?
                .to_string();
            let role_byte = cursor.u8().ok_or_else(|| corrupt("truncated role"))?;
            let role = EmbeddingRole::from_byte(role_byte)
                .ok_or_else(|| corrupt("unknown embedding role"))?;
            let rank = cursor.u16().ok_or_else(|| corrupt("truncated rank"))?;
            let mut values = Vec::with_capacity(dim);
            for _ in 0..dim {
                let v = cursor.f32().ok_or_else(|| corrupt("truncated values"))?;
                values.push(f64::from(v));
            }
            store
                .insert(&image_id, role, rank, values)
                .map_err(|e| FormatError::Corrupt {
                    path: path.to_path_buf(),
                    message: format!("entry {i}: {e}"),
                })?;
        }
        if cursor.pos != bytes.len() {
            return Err(corrupt("trailing bytes after final entry"));
        }
        Ok(store)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let slice = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(slice)
    }

    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32(&mut self) -> Option<f32> {
        self.take(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
