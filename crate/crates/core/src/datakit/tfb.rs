//! TFB1: one bag per file, little-endian.
//!
//! ```text
//! 0   "TFB1"
//! 4   u16 version (1)
//! 6   u16 label
//! 8   u32 N
//! 12  u32 d
//! 16  N x (i32 row, i32 col)
//! ..  N x d f32, row-major
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::hypergraph::TileBag;
use crate::numkit::Matrix;

pub const MAGIC: [u8; 4] = *b"TFB1";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;

pub fn encoded_len(n: usize, d: usize) -> usize {
    HEADER_LEN + 8 * n + 4 * n * d
}

pub fn encode_bag(bag: &TileBag) -> Result<Vec<u8>> {
    let (n, d) = bag.features.shape();
    let label = u16::try_from(bag.label)
        .map_err(|_| Error::Data(format!("label {} does not fit in u16", bag.label)))?;
    let n32 = u32::try_from(n).map_err(|_| Error::Data(format!("{n} tiles")))?;
    let d32 = u32::try_from(d).map_err(|_| Error::Data(format!("width {d}")))?;
    let mut out = Vec::with_capacity(encoded_len(n, d));
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&label.to_le_bytes());
    out.extend_from_slice(&n32.to_le_bytes());
    out.extend_from_slice(&d32.to_le_bytes());
    for &(r, c) in &bag.coords {
        out.extend_from_slice(&r.to_le_bytes());
        out.extend_from_slice(&c.to_le_bytes());
    }
    for &v in bag.features.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn i32_at(b: &[u8], at: usize) -> i32 {
    i32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

pub fn decode_bag(bytes: &[u8], id: impl Into<String>) -> Result<TileBag> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let found: [u8; 4] = bytes[..4].try_into().unwrap();
    if found != MAGIC {
        return Err(Error::BadMagic {
            expected: MAGIC,
            found,
        });
    }
    let version = u16_at(bytes, 4);
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            expected: VERSION,
            found: version,
        });
    }
    let label = u16_at(bytes, 6) as usize;
    let n = u32_at(bytes, 8) as usize;
    let d = u32_at(bytes, 12) as usize;
    let expected = encoded_len(n, d);
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::LengthMismatch {
            expected,
            actual: bytes.len(),
        });
    }
    let coords = (0..n)
        .map(|i| {
            (
                i32_at(bytes, HEADER_LEN + 8 * i),
                i32_at(bytes, HEADER_LEN + 8 * i + 4),
            )
        })
        .collect();
    let base = HEADER_LEN + 8 * n;
    let mut values = Vec::with_capacity(n * d);
    for i in 0..n * d {
        let v = f32::from_le_bytes(bytes[base + 4 * i..base + 4 * i + 4].try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::NonFinitePayload { index: i });
        }
        values.push(v as f64);
    }
    TileBag::new(id, coords, Matrix::from_vec(n, d, values)?, label)
}

pub fn write_bag(path: &Path, bag: &TileBag) -> Result<()> {
    let bytes = encode_bag(bag)?;
    std::fs::write(path, bytes).map_err(|e| Error::file(path, e))
}

/// Reads a bag; its id is the file stem.
pub fn read_bag(path: &Path) -> Result<TileBag> {
    let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_bag(&bytes, id)
}

/// FNV-1a over raw bytes; used to pin generated files.
pub fn checksum(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}
