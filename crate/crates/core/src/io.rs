//! Image files.
//!
//! Two formats are supported:
//!
//! * `PNPI`: a 16-byte header (`b"PNPI"`, `u32` height, `u32` width, `u32`
//!   reserved zero, all little-endian) followed by `height * width`
//!   little-endian `f32` pixels in row-major order. Round-trips are exact for
//!   values representable in `f32`.
//! * Binary 8-bit portable graymap (`P5`), mapped linearly onto [0, 1].
//!
//! Reading detects the format from the magic bytes. Writing picks `P5` for
//! `.pgm` paths and `PNPI` for everything else.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

pub const PNPI_MAGIC: &[u8; 4] = b"PNPI";
pub const PNPI_HEADER_LEN: usize = 16;

/// Refuse to allocate more pixels than this from a file header.
const MAX_PIXELS: u64 = 1 << 28;

pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let bytes = fs::read(path)?;
    decode_image(&bytes)
}

pub fn write_image(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let path = path.as_ref();
    let is_pgm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    let bytes = if is_pgm { encode_pgm(img) } else { encode_pnpi(img) };
    fs::write(path, bytes)?;
    Ok(())
}

pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    if bytes.starts_with(PNPI_MAGIC) {
        decode_pnpi(bytes)
    } else if bytes.starts_with(b"P5") {
        decode_pgm(bytes)
    } else {
        Err(Error::Format {
            offset: 0,
            reason: "unrecognized magic bytes (expected PNPI or P5)".into(),
        })
    }
}

pub fn encode_pnpi(img: &Image) -> Vec<u8> {
    let mut out = Vec::with_capacity(PNPI_HEADER_LEN + 4 * img.len());
    out.extend_from_slice(PNPI_MAGIC);
    out.extend_from_slice(&(img.height() as u32).to_le_bytes());
    out.extend_from_slice(&(img.width() as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for &v in img.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .ok_or(Error::Format {
            offset: offset as u64,
            reason: "truncated header".into(),
        })
}

pub fn decode_pnpi(bytes: &[u8]) -> Result<Image> {
    if !bytes.starts_with(PNPI_MAGIC) {
        return Err(Error::Format {
            offset: 0,
            reason: "bad PNPI magic".into(),
        });
    }
    let height = read_u32(bytes, 4)?;
    let width = read_u32(bytes, 8)?;
    let reserved = read_u32(bytes, 12)?;
    if reserved != 0 {
        return Err(Error::Format {
            offset: 12,
            reason: format!("reserved word must be zero, found {reserved}"),
        });
    }
    if height == 0 || width == 0 {
        return Err(Error::Format {
            offset: 4,
            reason: format!("zero dimension {height}x{width}"),
        });
    }
    let pixels = height as u64 * width as u64;
    if pixels > MAX_PIXELS {
        return Err(Error::Format {
            offset: 4,
            reason: format!("dimension overflow: {height}x{width}"),
        });
    }
    let expected = PNPI_HEADER_LEN as u64 + 4 * pixels;
    if (bytes.len() as u64) < expected {
        return Err(Error::Format {
            offset: bytes.len() as u64,
            reason: format!("truncated payload: expected {expected} bytes"),
        });
    }
    if (bytes.len() as u64) > expected {
        return Err(Error::Format {
            offset: expected,
            reason: "trailing bytes after payload".into(),
        });
    }
    let data = bytes[PNPI_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Image::new(height as usize, width as usize, data)
}

pub fn encode_pgm(img: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

/// Parses the next whitespace-delimited ASCII integer of a PGM header,
/// skipping `#` comments.
fn pgm_token(bytes: &[u8], pos: &mut usize) -> Result<u64> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                    *pos += 1;
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => {
                return Err(Error::Format {
                    offset: *pos as u64,
                    reason: "truncated P5 header".into(),
                })
            }
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(|b| b.is_ascii_digit()) {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Format {
            offset: start as u64,
            reason: "expected decimal integer in P5 header".into(),
        });
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or(Error::Format {
            offset: start as u64,
            reason: "integer out of range".into(),
        })
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    if !bytes.starts_with(b"P5") {
        return Err(Error::Format {
            offset: 0,
            reason: "bad P5 magic".into(),
        });
    }
    let mut pos = 2;
    let width = pgm_token(bytes, &mut pos)?;
    let height = pgm_token(bytes, &mut pos)?;
    let maxval_at = pos;
    let maxval = pgm_token(bytes, &mut pos)?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format {
            offset: maxval_at as u64,
            reason: format!("unsupported maxval {maxval} (8-bit only)"),
        });
    }
    if width == 0 || height == 0 {
        return Err(Error::Format {
            offset: 2,
            reason: format!("zero dimension {height}x{width}"),
        });
    }
    if height.saturating_mul(width) > MAX_PIXELS {
        return Err(Error::Format {
            offset: 2,
            reason: format!("dimension overflow: {height}x{width}"),
        });
    }
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(Error::Format {
            offset: pos as u64,
            reason: "missing whitespace after maxval".into(),
        });
    }
    pos += 1;
    let pixels = (height * width) as usize;
    let payload = &bytes[pos..];
    if payload.len() < pixels {
        return Err(Error::Format {
            offset: bytes.len() as u64,
            reason: format!("truncated payload: expected {pixels} pixel bytes"),
        });
    }
    let scale = 1.0 / maxval as f64;
    let data = payload[..pixels].iter().map(|&b| b as f64 * scale).collect();
    Image::new(height as usize, width as usize, data)
}
