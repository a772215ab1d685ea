//! Raw image files, PGM previews and small file helpers.
//!
//! Raw layout: `IVK1`, height (u32 LE), width (u32 LE), then `height·width`
//! f64 LE values row-major.

use std::fs;
use std::path::Path;

use invkit_core::Image;

use crate::error::{CliError, CliResult};

pub const RAW_MAGIC: &[u8; 4] = b"IVK1";
const RAW_HEADER: usize = 12;

pub fn encode_raw(img: &Image) -> Vec<u8> {
    let mut out = Vec::with_capacity(RAW_HEADER + 8 * img.len());
    out.extend_from_slice(RAW_MAGIC);
    out.extend_from_slice(&(img.height() as u32).to_le_bytes());
    out.extend_from_slice(&(img.width() as u32).to_le_bytes());
    for v in img.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_raw(bytes: &[u8]) -> Result<Image, String> {
    if bytes.len() < RAW_HEADER || &bytes[..4] != RAW_MAGIC {
        return Err("not an IVK1 raw image".into());
    }
    let h = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let w = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = &bytes[RAW_HEADER..];
    if h == 0 || w == 0 || body.len() != 8 * h * w {
        return Err(format!("raw image {h}x{w} expects {} data bytes, found {}", 8 * h * w, body.len()));
    }
    let data = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Image::new(h, w, data).map_err(|e| e.to_string())
}

/// 8-bit binary PGM; values are clamped to `[0, 1]` and scaled to `0..=255`.
pub fn encode_pgm(img: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| {
        let c = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        (c * 255.0).round() as u8
    }));
    out
}

/// Places equally tall images side by side.
pub fn hstack(images: &[&Image]) -> Image {
    let h = images.iter().map(|i| i.height()).max().unwrap_or(0);
    let w: usize = images.iter().map(|i| i.width()).sum();
    let mut out = Image::zeros(h, w);
    let mut col = 0;
    for img in images {
        for i in 0..img.height() {
            for j in 0..img.width() {
                out.set(i, col + j, img.get(i, j));
            }
        }
        col += img.width();
    }
    out
}

pub fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn read_raw(path: &Path) -> CliResult<Image> {
    decode_raw(&read_bytes(path)?).map_err(|e| CliError::io(path, e))
}

pub fn write_raw(path: &Path, img: &Image) -> CliResult<()> {
    write_bytes(path, &encode_raw(img))
}

pub fn write_pgm(path: &Path, img: &Image) -> CliResult<()> {
    write_bytes(path, &encode_pgm(img))
}
