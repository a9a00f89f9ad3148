//! Binary 8-bit PGM (P5) and PPM (P6).

use std::fs;
use std::path::Path;

use crate::error::{Result, SnfError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// 1 for P5, 3 for P6.
    pub channels: usize,
    /// Row-major interleaved samples.
    pub pixels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("PNM parse error at byte {offset}: {reason}")]
pub struct PnmError {
    pub offset: usize,
    pub reason: String,
}

fn fail<T>(offset: usize, reason: impl Into<String>) -> Result<T, PnmError> {
    Err(PnmError { offset, reason: reason.into() })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize, PnmError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return match self.bytes.get(self.pos) {
                None => fail(start, format!("unexpected end of header while reading {what}")),
                Some(_) => fail(start, format!("expected {what}")),
            };
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii digits");
        text.parse().or_else(|_| fail(start, format!("{what} out of range")))
    }
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<u8>) -> Self {
        assert_eq!(pixels.len(), width * height * channels, "pixel buffer size");
        Image { width, height, channels, pixels }
    }

    pub fn parse(bytes: &[u8]) -> Result<Image, PnmError> {
        let channels = match bytes.get(..2) {
            Some(b"P5") => 1,
            Some(b"P6") => 3,
            Some(_) => return fail(0, "unsupported magic (expected P5 or P6)"),
            None => return fail(bytes.len(), "file too short for a magic number"),
        };
        let mut cur = Cursor { bytes, pos: 2 };
        let width = cur.number("width")?;
        let height = cur.number("height")?;
        let maxval_at = cur.pos;
        let maxval = cur.number("maxval")?;
        if width == 0 || height == 0 {
            return fail(maxval_at, "zero image dimension");
        }
        if maxval != 255 {
            return fail(maxval_at, format!("maxval {maxval} unsupported, only 255"));
        }
        match bytes.get(cur.pos) {
            Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
            Some(_) => return fail(cur.pos, "expected whitespace after maxval"),
            None => return fail(cur.pos, "missing pixel data"),
        }
        let need = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| PnmError { offset: maxval_at, reason: "image too large".into() })?;
        let data = &bytes[cur.pos..];
        if data.len() < need {
            return fail(bytes.len(), format!("truncated pixel data: {} of {need} bytes", data.len()));
        }
        Ok(Image { width, height, channels, pixels: data[..need].to_vec() })
    }

    pub fn encode(&self) -> Vec<u8> {
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn read(path: &Path) -> Result<Image> {
        let bytes = fs::read(path).map_err(|e| SnfError::io(path, e))?;
        Image::parse(&bytes).map_err(|source| SnfError::Pnm { path: path.to_path_buf(), source })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| SnfError::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_with_comments() {
        let img = Image::parse(b"P5\n# hi\n2 1 # trailing\n255\n\x01\x02").unwrap();
        assert_eq!((img.width, img.height, img.channels), (2, 1, 1));
        assert_eq!(img.pixels, vec![1, 2]);
    }

    #[test]
    fn error_offsets() {
        assert_eq!(Image::parse(b"P3\n1 1\n255\n").unwrap_err().offset, 0);
        assert_eq!(Image::parse(b"P6\n1 x\n255\n").unwrap_err().offset, 5);
        let e = Image::parse(b"P6\n2 2\n255\n\0\0\0").unwrap_err();
        assert_eq!(e.offset, 14);
        assert!(e.reason.contains("truncated"));
        assert!(Image::parse(b"P6\n1 1\n65535\n\0\0\0\0\0\0").is_err());
    }

    #[test]
    fn round_trip() {
        let img = Image::new(3, 2, 3, (0..18).collect());
        assert_eq!(Image::parse(&img.encode()).unwrap(), img);
    }
}
