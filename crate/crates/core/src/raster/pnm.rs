//! Binary portable pixmap / graymap codec (P6 and P5, maxval 255).

use std::path::Path;

use super::{Raster, CHANNELS};
use crate::error::{Error, Result};

/// Encodes as `P6\n<w> <h>\n255\n` followed by the raw samples.
pub fn write_pnm(raster: &Raster) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", raster.width(), raster.height()).into_bytes();
    out.extend_from_slice(raster.data());
    out
}

/// Encodes a single-channel image as P5.
pub fn write_pgm(width: u32, height: u32, gray: &[u8]) -> Result<Vec<u8>> {
    if gray.len() != width as usize * height as usize || width == 0 || height == 0 {
        return Err(Error::Codec(format!(
            "graymap {width}x{height} with {} samples",
            gray.len()
        )));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(gray);
    Ok(out)
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Header<'a> {
    fn skip_whitespace_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(|b| b.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Codec(format!("expected {what} at byte {start}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| Error::Codec(format!("{what} out of range")))
    }
}

/// Decodes P6, or P5 expanded to three equal channels.
pub fn read_pnm(bytes: &[u8]) -> Result<Raster> {
    let channels = match bytes.get(..2) {
        Some(b"P6") => 3usize,
        Some(b"P5") => 1usize,
        _ => return Err(Error::Codec("missing P6/P5 magic".into())),
    };
    let mut header = Header { bytes, pos: 2 };
    if !header.bytes.get(2).is_some_and(|b| b.is_ascii_whitespace() || *b == b'#') {
        return Err(Error::Codec("magic must be followed by whitespace".into()));
    }
    let width = header.number("width")?;
    let height = header.number("height")?;
    let maxval = header.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Codec(format!("zero dimension {width}x{height}")));
    }
    if maxval != 255 {
        return Err(Error::Codec(format!("unsupported maxval {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the payload.
    match bytes.get(header.pos) {
        Some(b) if b.is_ascii_whitespace() => header.pos += 1,
        _ => return Err(Error::Codec("header not terminated by whitespace".into())),
    }
    let payload = &bytes[header.pos..];
    let expected = (width as usize)
        .checked_mul(height as usize)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::Codec("dimensions overflow".into()))?;
    if payload.len() < expected {
        return Err(Error::Codec(format!(
            "truncated payload: {} of {expected} bytes",
            payload.len()
        )));
    }
    if payload.len() > expected {
        return Err(Error::Codec(format!(
            "{} trailing bytes after payload",
            payload.len() - expected
        )));
    }
    let data = if channels == CHANNELS {
        payload.to_vec()
    } else {
        payload.iter().flat_map(|&v| [v, v, v]).collect()
    };
    Raster::new(width, height, data)
}

pub fn read_pnm_file(path: &Path) -> Result<Raster> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_pnm(&bytes).map_err(|e| e.context(path.display().to_string()))
}

pub fn write_pnm_file(path: &Path, raster: &Raster) -> Result<()> {
    std::fs::write(path, write_pnm(raster)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_red_pixel() {
        let bytes = b"P6\n1 1\n255\n\xff\x00\x00";
        let r = read_pnm(bytes).unwrap();
        assert_eq!((r.width(), r.height()), (1, 1));
        assert_eq!(r.data(), &[255, 0, 0]);
        assert_eq!(write_pnm(&r), bytes.to_vec());
    }

    #[test]
    fn graymap_expands_to_three_channels() {
        let r = read_pnm(b"P5 2 1 255 \x10\x20").unwrap();
        assert_eq!(r.data(), &[16, 16, 16, 32, 32, 32]);
    }

    #[test]
    fn comments_accepted_in_header() {
        let r = read_pnm(b"P6\n# made by hand\n1 # width done\n1\n255\n\x01\x02\x03").unwrap();
        assert_eq!(r.data(), &[1, 2, 3]);
    }

    #[test]
    fn truncated_payload_rejected() {
        let mut bytes = b"P6\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0; 9]);
        assert!(matches!(read_pnm(&bytes), Err(Error::Codec(_))));
    }

    #[test]
    fn pgm_writer_roundtrip() {
        let bytes = write_pgm(2, 2, &[1, 2, 3, 4]).unwrap();
        let r = read_pnm(&bytes).unwrap();
        assert_eq!(r.gray_u8(), vec![1, 2, 3, 4]);
        assert!(write_pgm(2, 2, &[1]).is_err());
    }
}
