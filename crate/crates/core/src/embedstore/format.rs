//! EMB1 binary embedding container.
//!
//! Layout (all little-endian):
//! - bytes 0..4: ASCII magic `EMB1`
//! - bytes 4..8: u32 version, always 1
//! - bytes 8..12: u32 row count `n`
//! - bytes 12..16: u32 dimension `l`
//! - then `n * l` IEEE-754 binary32 values, row-major

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

pub const MAGIC: &[u8; 4] = b"EMB1";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;

/// Row-major `n x l` matrix of finite `f32` embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n: usize,
    l: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(n: usize, l: usize, data: Vec<f32>) -> Result<Self> {
        if l == 0 {
            return Err(Error::Format(
                "embedding dimension must be at least 1".into(),
            ));
        }
        if data.len() != n * l {
            return Err(Error::Data(format!(
                "expected {} values for a {n}x{l} matrix, got {}",
                n * l,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value {} at row {}, column {}",
                data[pos],
                pos / l,
                pos % l
            )));
        }
        Ok(Self { n, l, data })
    }

    pub fn empty(l: usize) -> Result<Self> {
        Self::new(0, l, Vec::new())
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R], l: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * l);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != l {
                return Err(Error::Data(format!(
                    "row {i} has {} values, expected {l}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), l, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.l..(i + 1) * self.l]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.l)
    }

    /// Serialize to the EMB1 byte layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n as u32).to_le_bytes());
        out.extend_from_slice(&(self.l as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncation(format!(
                "file is {} bytes, shorter than the {HEADER_LEN}-byte header",
                bytes.len()
            )));
        }
        if &bytes[0..4] != MAGIC {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected \"EMB1\"",
                String::from_utf8_lossy(&bytes[0..4])
            )));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let version = word(4);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let n = word(8) as usize;
        let l = word(12) as usize;
        if l == 0 {
            return Err(Error::Format("header declares dimension 0".into()));
        }
        let expected = n
            .checked_mul(l)
            .and_then(|v| v.checked_mul(4))
            .and_then(|v| v.checked_add(HEADER_LEN))
            .ok_or_else(|| Error::Format(format!("header size {n}x{l} overflows")))?;
        if bytes.len() != expected {
            return Err(Error::Truncation(format!(
                "payload size mismatch: header declares {n}x{l} ({expected} bytes), file has {} bytes",
                bytes.len()
            )));
        }
        let data = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::new(n, l, data)
    }
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingMatrix::from_bytes(&bytes)
}

pub fn write_embeddings(matrix: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_atomic(path, &matrix.to_bytes())
}
