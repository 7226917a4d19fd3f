//! Binary greymap (PGM `P5`) reader and writer.
//!
//! Samples are one byte when `maxval < 256`, otherwise two bytes in
//! big-endian order. Header comments (`#` to end of line) are skipped on read;
//! the writer emits the canonical `P5\n<w> <h>\n<maxval>\n` header.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

impl Pgm {
    pub fn new(width: usize, height: usize, maxval: u16, samples: Vec<u16>) -> Result<Self> {
        if width == 0 || height == 0 || samples.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} samples for a {width}x{height} greymap",
                samples.len()
            )));
        }
        if maxval == 0 {
            return Err(Error::InvalidRaster("maxval must be positive".into()));
        }
        if let Some(s) = samples.iter().find(|s| **s > maxval) {
            return Err(Error::InvalidRaster(format!(
                "sample {s} exceeds maxval {maxval}"
            )));
        }
        Ok(Self {
            width,
            height,
            maxval,
            samples,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n{}\n", self.width, self.height, self.maxval).into_bytes();
        if self.maxval < 256 {
            out.extend(self.samples.iter().map(|&s| s as u8));
        } else {
            for s in &self.samples {
                out.extend_from_slice(&s.to_be_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut cursor = Header { bytes, pos: 0 };
        if cursor.bytes.get(..2) != Some(b"P5") {
            return Err("not a binary PGM (missing P5 magic)".into());
        }
        cursor.pos = 2;
        let width = cursor.number("width")?;
        let height = cursor.number("height")?;
        let maxval = cursor.number("maxval")?;
        if width == 0 || height == 0 {
            return Err(format!("empty image {width}x{height}"));
        }
        if maxval == 0 || maxval > 65535 {
            return Err(format!("maxval {maxval} outside 1..=65535"));
        }
        // Exactly one whitespace byte separates the header from the raster.
        match cursor.bytes.get(cursor.pos) {
            Some(b) if b.is_ascii_whitespace() => cursor.pos += 1,
            _ => return Err("missing whitespace after maxval".into()),
        }
        let count = width
            .checked_mul(height)
            .ok_or_else(|| "image dimensions overflow".to_string())?;
        let wide = maxval >= 256;
        let need = count * if wide { 2 } else { 1 };
        let data = &bytes[cursor.pos..];
        if data.len() < need {
            return Err(format!("raster truncated: {} of {need} bytes", data.len()));
        }
        if data.len() > need {
            return Err(format!("{} trailing bytes after raster", data.len() - need));
        }
        let samples: Vec<u16> = if wide {
            data.chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]))
                .collect()
        } else {
            data.iter().map(|&b| u16::from(b)).collect()
        };
        let maxval = maxval as u16;
        if let Some(s) = samples.iter().find(|s| **s > maxval) {
            return Err(format!("sample {s} exceeds maxval {maxval}"));
        }
        Ok(Self {
            width,
            height,
            maxval,
            samples,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|reason| Error::format(path, reason))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> std::result::Result<usize, String> {
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(format!("expected {what} in header"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| format!("{what} out of range"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eight_bit_layout() {
        let img = Pgm::new(3, 1, 255, vec![0, 128, 255]).unwrap();
        assert_eq!(img.encode(), b"P5\n3 1\n255\n\x00\x80\xff".to_vec());
        assert_eq!(Pgm::decode(&img.encode()).unwrap(), img);
    }

    #[test]
    fn sixteen_bit_is_big_endian() {
        let img = Pgm::new(2, 1, 65535, vec![0x0102, 0xfffe]).unwrap();
        let bytes = img.encode();
        assert_eq!(&bytes[bytes.len() - 4..], &[0x01, 0x02, 0xff, 0xfe]);
        assert_eq!(Pgm::decode(&bytes).unwrap(), img);
    }

    #[test]
    fn header_comments_and_whitespace() {
        let bytes = b"P5 # made by hand\n2\t2 # dims\n  15\n\x01\x02\x03\x0f";
        let img = Pgm::decode(bytes).unwrap();
        assert_eq!((img.width, img.height, img.maxval), (2, 2, 15));
        assert_eq!(img.samples, vec![1, 2, 3, 15]);
    }

    #[test]
    fn malformed_inputs() {
        assert!(Pgm::decode(b"P2\n1 1\n255\n0").is_err());
        assert!(Pgm::decode(b"P5\n2 2\n255\n\x00\x00\x00").is_err());
        assert!(Pgm::decode(b"P5\n1 1\n255\n\x00\x00").is_err());
        assert!(Pgm::decode(b"P5\n1 1\n100\n\xff").is_err());
        assert!(Pgm::decode(b"P5\n0 1\n255\n").is_err());
        assert!(Pgm::decode(b"P5\n1 1\n70000\n\x00\x00").is_err());
    }
}
