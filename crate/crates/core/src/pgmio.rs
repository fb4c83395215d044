//! Netpbm graymap I/O plus a raw `f64` container for unquantized images.
//!
//! Reads binary (`P5`) and ASCII (`P2`) PGM with `maxval` 255 and `#`
//! comments in the header. Always writes canonical `P5`:
//! `P5\n<w> <h>\n255\n` followed by the raw bytes.
//!
//! The float container is a 16-byte header, `b"DWMKF64\0"` then width and
//! height as little-endian `u32`, followed by `width * height` little-endian
//! `f64` samples in row-major order.

use std::fs;
use std::path::Path;

use crate::imaging::{FloatImage, GrayImage};
use crate::{Error, Result};

pub const FLOAT_MAGIC: &[u8; 8] = b"DWMKF64\0";

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len()
            && !self.bytes[self.pos].is_ascii_whitespace()
            && self.bytes[self.pos] != b'#'
        {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<u64> {
        let tok = self.token().ok_or_else(|| Error::BadHeader(format!("missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<u64>().ok())
            .ok_or_else(|| Error::BadHeader(format!("bad {what}: {:?}", String::from_utf8_lossy(tok))))
    }
}

pub fn read_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut rd = HeaderReader { bytes, pos: 0 };
    let binary = match rd.token() {
        Some(b"P5") => true,
        Some(b"P2") => false,
        _ => return Err(Error::BadMagic),
    };
    let width = rd.number("width")?;
    let height = rd.number("height")?;
    let maxval = rd.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::BadHeader(format!("zero dimension {width}x{height}")));
    }
    if maxval != 255 {
        return Err(Error::UnsupportedMaxval(maxval));
    }
    let count = (width as usize)
        .checked_mul(height as usize)
        .ok_or_else(|| Error::BadHeader("image too large".into()))?;

    let pixels = if binary {
        // Exactly one whitespace byte separates maxval from the raster.
        match bytes.get(rd.pos) {
            Some(c) if c.is_ascii_whitespace() => {}
            _ => return Err(Error::BadHeader("missing whitespace after maxval".into())),
        }
        let payload = &bytes[rd.pos + 1..];
        if payload.len() < count {
            return Err(Error::TruncatedPayload { expected: count, found: payload.len() });
        }
        payload[..count].to_vec()
    } else {
        let mut pixels = Vec::with_capacity(count);
        for found in 0..count {
            let v = match rd.token() {
                Some(tok) => std::str::from_utf8(tok).ok().and_then(|s| s.parse::<u64>().ok()),
                None => return Err(Error::TruncatedPayload { expected: count, found }),
            };
            match v {
                Some(v) if v <= 255 => pixels.push(v as u8),
                _ => return Err(Error::BadHeader(format!("bad sample at index {found}"))),
            }
        }
        pixels
    };
    GrayImage::new(width as usize, height as usize, pixels)
}

pub fn write_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

pub fn read_float_image(bytes: &[u8]) -> Result<FloatImage<f64>> {
    if bytes.len() < 16 || &bytes[..8] != FLOAT_MAGIC {
        return Err(Error::BadMagic);
    }
    let width = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let count = width * height;
    let payload = &bytes[16..];
    if payload.len() < count * 8 {
        return Err(Error::TruncatedPayload { expected: count, found: payload.len() / 8 });
    }
    let samples = payload[..count * 8]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    FloatImage::new(width, height, samples)
}

pub fn write_float_image(img: &FloatImage<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + img.samples().len() * 8);
    out.extend_from_slice(FLOAT_MAGIC);
    out.extend_from_slice(&(img.width() as u32).to_le_bytes());
    out.extend_from_slice(&(img.height() as u32).to_le_bytes());
    for v in img.samples() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes either container, sniffing the magic.
pub fn read_any(bytes: &[u8]) -> Result<FloatImage<f64>> {
    if bytes.starts_with(FLOAT_MAGIC) {
        read_float_image(bytes)
    } else {
        Ok(FloatImage::from_gray(&read_pgm(bytes)?))
    }
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    read_pgm(&fs::read(path)?)
}

pub fn save_pgm(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    Ok(fs::write(path, write_pgm(img))?)
}

pub fn load_any(path: impl AsRef<Path>) -> Result<FloatImage<f64>> {
    read_any(&fs::read(path)?)
}

pub fn save_float_image(path: impl AsRef<Path>, img: &FloatImage<f64>) -> Result<()> {
    Ok(fs::write(path, write_float_image(img))?)
}
