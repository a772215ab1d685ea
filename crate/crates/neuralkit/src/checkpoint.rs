//! Flat binary parameter checkpoints.
//!
//! Layout: magic `IVKW`, format version (u32 LE), parameter count (u64 LE),
//! then that many `f64` values little-endian in layer order.

use crate::error::{NeuralError, Result};

pub const MAGIC: &[u8; 4] = b"IVKW";
pub const VERSION: u32 = 1;

pub fn encode(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(NeuralError::Checkpoint("missing IVKW header".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(NeuralError::Checkpoint(format!("unsupported version {version}")));
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if body.len() != count * 8 {
        return Err(NeuralError::Checkpoint(format!(
            "expected {} value bytes, found {}",
            count * 8,
            body.len()
        )));
    }
    Ok(body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}
