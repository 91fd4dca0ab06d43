//! 8-bit grayscale frames and binary PGM (P5) I/O.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    /// Row-major.
    pixels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("frame dimensions must be at least 1x1")]
    Empty,
    #[error("expected {expected} pixels, got {got}")]
    PixelCount { expected: usize, got: usize },
    #[error("not a binary PGM: {0}")]
    Pgm(&'static str),
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, FrameError> {
        if width == 0 || height == 0 {
            return Err(FrameError::Empty);
        }
        let expected = width.checked_mul(height).ok_or(FrameError::Empty)?;
        if pixels.len() != expected {
            return Err(FrameError::PixelCount {
                expected,
                got: pixels.len(),
            });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self, FrameError> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn same_dimensions(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn mean_luminance(&self) -> f64 {
        let sum: u64 = self.pixels.iter().map(|&p| p as u64).sum();
        sum as f64 / self.pixels.len() as f64
    }

    /// Parses a binary PGM. Samples are taken as raw bytes; maxval must be
    /// at most 255.
    pub fn from_pgm(bytes: &[u8]) -> Result<Self, FrameError> {
        let mut pos = 0;
        if bytes.get(0..2) != Some(b"P5") {
            return Err(FrameError::Pgm("missing P5 magic"));
        }
        pos += 2;
        let mut fields = [0usize; 3];
        for field in &mut fields {
            // Whitespace and comments between header fields.
            loop {
                match bytes.get(pos) {
                    Some(b) if b.is_ascii_whitespace() => pos += 1,
                    Some(b'#') => {
                        while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                            pos += 1;
                        }
                    }
                    Some(_) => break,
                    None => return Err(FrameError::Pgm("truncated header")),
                }
            }
            let start = pos;
            while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
                pos += 1;
            }
            if start == pos {
                return Err(FrameError::Pgm("expected a decimal header field"));
            }
            *field = std::str::from_utf8(&bytes[start..pos])
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or(FrameError::Pgm("header field out of range"))?;
        }
        let [width, height, maxval] = fields;
        if maxval == 0 || maxval > 255 {
            return Err(FrameError::Pgm("only 8-bit maxval is supported"));
        }
        if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
            return Err(FrameError::Pgm("missing whitespace before raster"));
        }
        pos += 1;
        let raster = &bytes[pos..];
        let expected = width.checked_mul(height).ok_or(FrameError::Pgm("dimensions overflow"))?;
        if raster.len() < expected {
            return Err(FrameError::Pgm("raster shorter than width x height"));
        }
        Frame::new(width, height, raster[..expected].to_vec())
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensions_validated() {
        assert_eq!(Frame::new(0, 3, vec![]), Err(FrameError::Empty));
        assert_eq!(
            Frame::new(2, 2, vec![0; 3]),
            Err(FrameError::PixelCount { expected: 4, got: 3 })
        );
    }

    #[test]
    fn pgm_round_trip_is_bit_exact() {
        let f = Frame::new(3, 2, vec![0, 1, 2, 253, 254, 255]).unwrap();
        let bytes = f.to_pgm();
        assert_eq!(&bytes[..11], b"P5\n3 2\n255\n");
        assert_eq!(Frame::from_pgm(&bytes).unwrap(), f);
    }

    #[test]
    fn pgm_header_comments_and_errors() {
        let bytes = b"P5 # made by hand\n2 1 # dims\n255\n\x0a\x14";
        let f = Frame::from_pgm(bytes).unwrap();
        assert_eq!(f.pixels(), &[10, 20]);
        assert!(Frame::from_pgm(b"P2\n1 1\n255\n\x00").is_err());
        assert!(Frame::from_pgm(b"P5\n2 2\n255\n\x00").is_err());
        assert!(Frame::from_pgm(b"P5\n1 1\n65535\n\x00\x00").is_err());
    }

    #[test]
    fn mean() {
        let f = Frame::new(2, 2, vec![0, 100, 200, 0]).unwrap();
        assert_eq!(f.mean_luminance(), 75.0);
    }
}
