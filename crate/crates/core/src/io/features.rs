//! LFV1 feature files.
//!
//! Layout (all integers little-endian):
//!
//! | offset | size        | field                         |
//! |--------|-------------|-------------------------------|
//! | 0      | 4           | magic `LFV1`                  |
//! | 4      | 4           | row count, u32                |
//! | 8      | 4           | dimension, u32                |
//! | 12     | 4·rows·dim  | row-major f32 payload         |

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::perceptual::FeatureSet;

pub const MAGIC: &[u8; 4] = b"LFV1";
const HEADER_LEN: usize = 12;

fn err(offset: usize, reason: impl Into<String>) -> Error {
    Error::FeatureFile {
        offset: offset as u64,
        reason: reason.into(),
    }
}

/// Values are narrowed to f32.
pub fn encode_features(fs: &FeatureSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * fs.data().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(fs.len() as u32).to_le_bytes());
    out.extend_from_slice(&(fs.dim() as u32).to_le_bytes());
    for &v in fs.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureSet> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(err(0, "bad magic"));
    }
    if bytes.len() < HEADER_LEN {
        return Err(err(bytes.len(), "truncated header"));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    let (rows, dim) = (word(4) as usize, word(8) as usize);
    if dim == 0 {
        return Err(err(8, "dimension must be at least 1"));
    }
    let expected = rows
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| err(4, "row count × dimension overflows"))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < expected {
        return Err(err(
            bytes.len(),
            format!("truncated payload: expected {expected} bytes, found {}", payload.len()),
        ));
    }
    if payload.len() > expected {
        return Err(err(HEADER_LEN + expected, "trailing bytes after payload"));
    }
    let mut data = Vec::with_capacity(rows * dim);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if !v.is_finite() {
            return Err(err(HEADER_LEN + 4 * i, "non-finite value"));
        }
        data.push(f64::from(v));
    }
    FeatureSet::new(dim, data)
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<FeatureSet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes)
}

pub fn write_feature_file(fs: &FeatureSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_features(fs)).map_err(|e| Error::io(path, e))
}
