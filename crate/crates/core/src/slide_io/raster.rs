use std::path::Path;

use crate::error::{Error, Result};

/// 8-bit raster, row-major, 1 (gray) or 3 (RGB) interleaved channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<u8>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::usage(format!("raster must have 1 or 3 channels, got {channels}")));
        }
        if pixels.len() != width * height * channels {
            return Err(Error::usage(format!(
                "raster {width}x{height}x{channels} needs {} samples, got {}",
                width * height * channels,
                pixels.len()
            )));
        }
        Ok(Raster { width, height, channels, pixels })
    }

    pub fn filled(width: usize, height: usize, color: [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            pixels.extend_from_slice(&color);
        }
        Raster { width, height, channels: 3, pixels }
    }

    pub fn filled_gray(width: usize, height: usize, v: u8) -> Self {
        Raster { width, height, channels: 1, pixels: vec![v; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = (y * self.width + x) * self.channels;
        &self.pixels[i..i + self.channels]
    }

    /// RGB triple; gray rasters replicate their single channel.
    pub fn rgb(&self, x: usize, y: usize) -> [u8; 3] {
        let p = self.pixel(x, y);
        if self.channels == 1 {
            [p[0]; 3]
        } else {
            [p[0], p[1], p[2]]
        }
    }

    pub fn set_rgb(&mut self, x: usize, y: usize, c: [u8; 3]) {
        let i = (y * self.width + x) * self.channels;
        if self.channels == 1 {
            self.pixels[i] = ((u16::from(c[0]) + u16::from(c[1]) + u16::from(c[2])) / 3) as u8;
        } else {
            self.pixels[i..i + 3].copy_from_slice(&c);
        }
    }

    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Raster> {
        if x + w > self.width || y + h > self.height {
            return Err(Error::usage(format!(
                "crop {w}x{h}+{x}+{y} exceeds raster {}x{}",
                self.width, self.height
            )));
        }
        let mut pixels = Vec::with_capacity(w * h * self.channels);
        for row in y..y + h {
            let start = (row * self.width + x) * self.channels;
            pixels.extend_from_slice(&self.pixels[start..start + w * self.channels]);
        }
        Ok(Raster { width: w, height: h, channels: self.channels, pixels })
    }

    pub fn to_rgb(&self) -> Raster {
        if self.channels == 3 {
            return self.clone();
        }
        let pixels = self.pixels.iter().flat_map(|&v| [v, v, v]).collect();
        Raster { width: self.width, height: self.height, channels: 3, pixels }
    }

    /// Binary PPM (P6) for RGB or PGM (P5) for gray, max value 255.
    pub fn encode_pnm(&self) -> Vec<u8> {
        let magic = if self.channels == 3 { "P6" } else { "P5" };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn decode_pnm(bytes: &[u8], origin: &Path) -> Result<Raster> {
        let bad = |m: &str| Error::format(origin, m.to_string());
        let mut pos = 0usize;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            // skip whitespace and comments
            while pos < bytes.len() {
                if bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                } else if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    break;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header not ASCII"))?);
        }
        // exactly one whitespace byte separates the header from the samples
        if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
            return Err(bad("missing header terminator"));
        }
        pos += 1;
        let channels = match fields[0] {
            "P6" => 3,
            "P5" => 1,
            other => return Err(bad(&format!("unsupported magic {other}"))),
        };
        let parse = |s: &str, what: &str| s.parse::<usize>().map_err(|_| bad(&format!("bad {what}: {s}")));
        let width = parse(fields[1], "width")?;
        let height = parse(fields[2], "height")?;
        if parse(fields[3], "max value")? != 255 {
            return Err(bad("only max value 255 is supported"));
        }
        let expected = width * height * channels;
        let data = &bytes[pos..];
        if data.len() != expected {
            return Err(bad(&format!("expected {expected} sample bytes, found {}", data.len())));
        }
        Ok(Raster { width, height, channels, pixels: data.to_vec() })
    }

    pub fn read(path: &Path) -> Result<Raster> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Raster::decode_pnm(&bytes, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode_pnm()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pnm_roundtrip_is_bit_exact() {
        let mut r = Raster::filled(3, 2, [1, 2, 3]);
        r.set_rgb(2, 1, [255, 0, 9]);
        let bytes = r.encode_pnm();
        assert!(bytes.starts_with(b"P6\n3 2\n255\n"));
        let back = Raster::decode_pnm(&bytes, Path::new("m")).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.encode_pnm(), bytes);

        let g = Raster::filled_gray(2, 2, 77);
        assert_eq!(Raster::decode_pnm(&g.encode_pnm(), Path::new("g")).unwrap(), g);
    }

    #[test]
    fn pnm_header_with_comments() {
        let mut bytes = b"P5 # gray\n# another\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[10, 20]);
        let r = Raster::decode_pnm(&bytes, Path::new("c")).unwrap();
        assert_eq!(r.pixels(), &[10, 20]);
    }

    #[test]
    fn pnm_rejects_bad_input() {
        let p = Path::new("x");
        assert!(Raster::decode_pnm(b"P3\n1 1\n255\n\x00\x00\x00", p).is_err());
        assert!(Raster::decode_pnm(b"P6\n1 1\n65535\n\x00\x00\x00", p).is_err());
        assert!(Raster::decode_pnm(b"P6\n2 1\n255\n\x00\x00\x00", p).is_err());
    }

    #[test]
    fn crop_bounds() {
        let r = Raster::filled(4, 4, [0, 0, 0]);
        assert!(r.crop(2, 2, 2, 2).is_ok());
        assert!(r.crop(3, 0, 2, 1).is_err());
    }
}
