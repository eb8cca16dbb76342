//! Binary netpbm codecs: P6 PPM (maxval 255) for color images and P5 PGM
//! (maxval 65535, big-endian) for label maps.
//!
//! Encoders emit a canonical comment-free header; decoders accept `#`
//! comment lines anywhere in the header. Decode and encode invert each
//! other, byte-exactly for files in the canonical form.

use crate::pixel::{LabelMap, RgbImage};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PnmError {
    #[error("bad magic number: expected {expected}, found {found:?}")]
    BadMagic { expected: &'static str, found: String },
    #[error("malformed header field `{field}`")]
    BadHeader { field: &'static str },
    #[error("unsupported maxval {found} (field `maxval`, expected {expected})")]
    UnsupportedMaxval { expected: u32, found: u64 },
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("label map has {num_regions} regions; 16-bit PGM can hold at most 65536")]
    LabelOverflow { num_regions: u32 },
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn read_number(&mut self, field: &'static str) -> Result<u64, PnmError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(PnmError::BadHeader { field });
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(PnmError::BadHeader { field })
    }

    /// Consume the single whitespace byte separating header and payload.
    fn finish_header(&mut self, field: &'static str) -> Result<&'a [u8], PnmError> {
        if self.pos >= self.bytes.len() || !self.bytes[self.pos].is_ascii_whitespace() {
            return Err(PnmError::BadHeader { field });
        }
        self.pos += 1;
        Ok(&self.bytes[self.pos..])
    }
}

fn read_dims(r: &mut HeaderReader<'_>) -> Result<(u32, u32), PnmError> {
    let width = r.read_number("width")?;
    let height = r.read_number("height")?;
    if width < 1 || width > u32::MAX as u64 {
        return Err(PnmError::BadHeader { field: "width" });
    }
    if height < 1 || height > u32::MAX as u64 {
        return Err(PnmError::BadHeader { field: "height" });
    }
    Ok((width as u32, height as u32))
}

/// Decode a binary P6 PPM with maxval 255.
pub fn decode_ppm(bytes: &[u8]) -> Result<RgbImage, PnmError> {
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        let found = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(PnmError::BadMagic { expected: "P6", found });
    }
    let mut r = HeaderReader::new(&bytes[2..]);
    let (width, height) = read_dims(&mut r)?;
    let maxval = r.read_number("maxval")?;
    if maxval != 255 {
        return Err(PnmError::UnsupportedMaxval { expected: 255, found: maxval });
    }
    let payload = r.finish_header("maxval")?;
    let expected = width as usize * height as usize * 3;
    if payload.len() < expected {
        return Err(PnmError::TruncatedPayload { expected, found: payload.len() });
    }
    Ok(RgbImage::new(width, height, payload[..expected].to_vec()))
}

/// Encode as binary P6 with the canonical header `P6\n{w} {h}\n255\n`.
pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    out
}

/// Encode a label map as binary P5 with maxval 65535 and big-endian
/// samples. Fails when the map has more than 65536 regions; the caller
/// must remap before encoding.
pub fn encode_pgm16(lm: &LabelMap) -> Result<Vec<u8>, PnmError> {
    if lm.num_regions() > 65536 {
        return Err(PnmError::LabelOverflow { num_regions: lm.num_regions() });
    }
    let mut out = format!("P5\n{} {}\n65535\n", lm.width(), lm.height()).into_bytes();
    out.reserve(lm.labels().len() * 2);
    for &l in lm.labels() {
        out.extend_from_slice(&(l as u16).to_be_bytes());
    }
    Ok(out)
}

/// Decode a binary P5 PGM into raw samples. Accepts any maxval in
/// `1..=65535`; samples are one byte when maxval < 256, two big-endian
/// bytes otherwise.
pub fn decode_pgm(bytes: &[u8]) -> Result<(u32, u32, Vec<u16>), PnmError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        let found = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(PnmError::BadMagic { expected: "P5", found });
    }
    let mut r = HeaderReader::new(&bytes[2..]);
    let (width, height) = read_dims(&mut r)?;
    let maxval = r.read_number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(PnmError::UnsupportedMaxval { expected: 65535, found: maxval });
    }
    let payload = r.finish_header("maxval")?;
    let n = width as usize * height as usize;
    let samples = if maxval < 256 {
        if payload.len() < n {
            return Err(PnmError::TruncatedPayload { expected: n, found: payload.len() });
        }
        payload[..n].iter().map(|&b| b as u16).collect()
    } else {
        if payload.len() < n * 2 {
            return Err(PnmError::TruncatedPayload { expected: n * 2, found: payload.len() });
        }
        payload[..n * 2]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    Ok((width, height, samples))
}

/// Decode a 16-bit PGM as a label map. The result is raw file content;
/// run it through [`crate::initseg::validate_external`] before use.
pub fn decode_pgm16(bytes: &[u8]) -> Result<LabelMap, PnmError> {
    let (width, height, samples) = decode_pgm(bytes)?;
    let labels = samples.into_iter().map(|s| s as u32).collect();
    Ok(LabelMap::new(width, height, labels))
}
