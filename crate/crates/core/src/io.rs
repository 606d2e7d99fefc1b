//! Netpbm-family readers and writers: binary PGM (`P5`, 8-bit) for masks and
//! grayscale PFM (`Pf`) for float fields, plus the JSON sidecar convention.
//!
//! Grids are row-major with row 0 at the top of the image. PFM stores rows
//! bottom-to-top, so the writer emits the last row first and the reader
//! flips back.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

/// Single-channel float image.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

/// Slice sidecar: `foo.pgm` -> `foo.meta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

/// Field sidecar: `foo.pfm` -> `foo.field.json`, so a mask and its field
/// may share a stem.
pub fn field_sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("field.json")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::Format(format!("missing file {}", path.display()))
        } else {
            Error::Io(e)
        }
    })?;
    Ok(serde_json::from_str(&text)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Keys holding wall-clock measurements. Two runs with identical inputs
/// differ only under these.
pub const TIMING_KEYS: [&str; 3] = ["timing", "timings", "wall_time_s"];

/// Remove every [`TIMING_KEYS`] entry, at any depth.
pub fn strip_timing(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Object(map) => {
            map.retain(|k, _| !TIMING_KEYS.contains(&k.as_str()));
            map.values_mut().for_each(strip_timing);
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

/// Cursor over a netpbm header: whitespace-separated tokens, `#` comments.
struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Header<'a> {
    fn skip_space(&mut self) {
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

    fn token(&mut self) -> Result<&'a str> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Format("truncated header".into()));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::Format("non-ASCII header".into()))
    }

    fn usize(&mut self, what: &str) -> Result<usize> {
        let tok = self.token()?;
        tok.parse()
            .map_err(|_| Error::Format(format!("bad {what} `{tok}`")))
    }

    /// Exactly one whitespace byte separates the header from the raster.
    fn end(&mut self) -> Result<usize> {
        match self.bytes.get(self.pos) {
            Some(c) if c.is_ascii_whitespace() => Ok(self.pos + 1),
            _ => Err(Error::Format("missing whitespace after header".into())),
        }
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut h = Header { bytes, pos: 0 };
    let magic = h.token()?;
    if magic != "P5" {
        return Err(Error::Format(format!("expected P5 magic, found `{magic}`")));
    }
    let width = h.usize("width")?;
    let height = h.usize("height")?;
    let maxval = h.usize("maxval")?;
    if maxval != 255 {
        return Err(Error::Format(format!("PGM maxval must be 255, found {maxval}")));
    }
    let start = h.end()?;
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::Format("dimensions overflow".into()))?;
    let raster = &bytes[start..];
    if raster.len() != n {
        return Err(Error::Format(format!(
            "PGM raster has {} bytes, expected {width}x{height} = {n}",
            raster.len()
        )));
    }
    Ok(GrayImage {
        width,
        height,
        data: raster.to_vec(),
    })
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    decode_pgm(&fs::read(path)?)
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    fs::write(path, encode_pgm(img))?;
    Ok(())
}

pub fn decode_pfm(bytes: &[u8]) -> Result<FloatImage> {
    let mut h = Header { bytes, pos: 0 };
    let magic = h.token()?;
    if magic != "Pf" {
        return Err(Error::Format(format!(
            "expected grayscale PFM magic `Pf`, found `{magic}`"
        )));
    }
    let width = h.usize("width")?;
    let height = h.usize("height")?;
    let scale_tok = h.token()?;
    let scale: f32 = scale_tok
        .parse()
        .map_err(|_| Error::Format(format!("bad PFM scale `{scale_tok}`")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Format("PFM scale must be finite and nonzero".into()));
    }
    let little = scale < 0.0;
    let start = h.end()?;
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::Format("dimensions overflow".into()))?;
    let raster = &bytes[start..];
    if raster.len() != 4 * n {
        return Err(Error::Format(format!(
            "PFM raster has {} bytes, expected {}",
            raster.len(),
            4 * n
        )));
    }
    let mut data = vec![0.0f32; n];
    for (k, chunk) in raster.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        let stored_row = k / width;
        let col = k % width;
        data[(height - 1 - stored_row) * width + col] = v;
    }
    Ok(FloatImage {
        width,
        height,
        data,
    })
}

/// Little-endian PFM (scale `-1.0`).
pub fn encode_pfm(img: &FloatImage) -> Vec<u8> {
    let mut out = format!("Pf\n{} {}\n-1.0\n", img.width, img.height).into_bytes();
    out.reserve(4 * img.data.len());
    for row in (0..img.height).rev() {
        for v in &img.data[row * img.width..(row + 1) * img.width] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn read_pfm(path: &Path) -> Result<FloatImage> {
    decode_pfm(&fs::read(path)?)
}

pub fn write_pfm(path: &Path, img: &FloatImage) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_pfm(img))?;
    Ok(())
}
