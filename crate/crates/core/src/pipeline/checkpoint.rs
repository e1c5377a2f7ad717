//! Parameter container: little-endian, versioned, with the run configuration
//! embedded as text.
//!
//! ```text
//! "HGMC" u16 version u16 reserved
//! u32 config length, config bytes (key=value text)
//! u32 tensor count
//! per tensor: u16 name length, name, u32 rows, u32 cols, rows*cols f64
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::numkit::Parameters;

use super::{HgMambaModel, RunConfig};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"HGMC";
pub const CHECKPOINT_VERSION: u16 = 1;

pub fn encode_checkpoint(cfg: &RunConfig, model: &HgMambaModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    let text = cfg.to_text();
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    let names = model.names();
    let tensors = model.tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in names.iter().zip(tensors) {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
        for v in t.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at + n;
        if end > self.bytes.len() {
            return Err(Error::Truncated {
                expected: end,
                actual: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn text(&mut self, n: usize) -> Result<&'a str> {
        std::str::from_utf8(self.take(n)?)
            .map_err(|_| Error::Data("checkpoint text is not UTF-8".into()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(RunConfig, HgMambaModel)> {
    let mut r = Reader { bytes, at: 0 };
    let found: [u8; 4] = r.take(4)?.try_into().unwrap();
    if found != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            expected: CHECKPOINT_MAGIC,
            found,
        });
    }
    let version = r.u16()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion {
            expected: CHECKPOINT_VERSION,
            found: version,
        });
    }
    r.u16()?;
    let len = r.u32()?;
    let cfg = RunConfig::parse(r.text(len)?)?;
    let mut model = HgMambaModel::init(&cfg.model, 0)?;
    let names = model.names();
    let count = r.u32()?;
    if count != names.len() {
        return Err(Error::Data(format!(
            "checkpoint holds {count} tensors, configuration needs {}",
            names.len()
        )));
    }
    for (want, t) in names.iter().zip(model.tensors_mut()) {
        let len = r.u16()? as usize;
        let name = r.text(len)?;
        let (rows, cols) = (r.u32()?, r.u32()?);
        if name != want || (rows, cols) != t.shape() {
            return Err(Error::Data(format!(
                "checkpoint tensor {name} {rows}x{cols} where {want} {:?} was expected",
                t.shape()
            )));
        }
        for v in t.as_mut_slice() {
            *v = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
        }
    }
    if r.at != bytes.len() {
        return Err(Error::LengthMismatch {
            expected: r.at,
            actual: bytes.len(),
        });
    }
    Ok((cfg, model))
}

pub fn save_checkpoint(path: &Path, cfg: &RunConfig, model: &HgMambaModel) -> Result<()> {
    std::fs::write(path, encode_checkpoint(cfg, model)).map_err(|e| Error::file(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(RunConfig, HgMambaModel)> {
    let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
    decode_checkpoint(&bytes)
}
