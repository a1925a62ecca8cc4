//! Binary container shared by checkpoint and dataset files.
//!
//! Layout: 8-byte magic, `u64` little-endian header length, the JSON header,
//! then the payload as little-endian `f64`s.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub(crate) fn encode<H: Serialize>(magic: &[u8; 8], header: &H, data: &[f64]) -> Result<Vec<u8>> {
    let head = serde_json::to_vec(header)?;
    let mut out = Vec::with_capacity(16 + head.len() + 8 * data.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&(head.len() as u64).to_le_bytes());
    out.extend_from_slice(&head);
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub(crate) fn decode<H: DeserializeOwned>(magic: &[u8; 8], bytes: &[u8]) -> Result<(H, Vec<f64>)> {
    if bytes.len() < 16 {
        return Err(Error::format(bytes.len() as u64, "container header truncated"));
    }
    if &bytes[..8] != magic {
        return Err(Error::format(0, "bad container magic"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = 16usize
        .checked_add(hlen)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| Error::format(bytes.len() as u64, "JSON header truncated"))?;
    let header: H = serde_json::from_slice(&bytes[16..body])
        .map_err(|e| Error::format(16, format!("JSON header: {e}")))?;
    let rest = &bytes[body..];
    if rest.len() % 8 != 0 {
        return Err(Error::format(bytes.len() as u64, "payload is not a whole number of f64s"));
    }
    let data = rest
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((header, data))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}
