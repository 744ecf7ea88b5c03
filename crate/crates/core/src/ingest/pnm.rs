//! Binary PGM (P5) and PPM (P6) codec.

use std::path::Path;

use crate::binio;
use crate::error::{Error, Result};

/// An 8-bit raster, row-major, channels interleaved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Format("image dimensions must be positive".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Format(format!("unsupported channel count {channels}")));
        }
        if pixels.len() != width * height * channels {
            return Err(Error::DimensionMismatch {
                expected: width * height * channels,
                found: pixels.len(),
            });
        }
        Ok(RasterImage {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> u8,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height * channels);
        for r in 0..height {
            for c in 0..width {
                for ch in 0..channels {
                    pixels.push(f(r, c, ch));
                }
            }
        }
        Self::new(width, height, channels, pixels)
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

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> u8 {
        self.pixels[(row * self.width + col) * self.channels + channel]
    }
}

struct Header {
    channels: usize,
    width: usize,
    height: usize,
    maxval: usize,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let bad = |m: &str| Error::parse("PNM header", m);
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(bad("missing P5/P6 magic"));
    }
    let channels = match bytes[1] {
        b'5' => 1,
        b'6' => 3,
        _ => return Err(bad("only binary P5 and P6 are supported")),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err(bad("expected a decimal field"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| bad("numeric field overflow"))?;
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(bad("missing whitespace after maxval"));
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(bad("zero image dimension"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(bad("only 8-bit maxval (1..=255) is supported"));
    }
    Ok(Header {
        channels,
        width,
        height,
        maxval,
        data_start: pos + 1,
    })
}

/// Decodes a binary PGM/PPM. Samples are rescaled to 0..=255 when maxval < 255.
pub fn decode_pnm(bytes: &[u8]) -> Result<RasterImage> {
    let h = parse_header(bytes)?;
    let n = h.width * h.height * h.channels;
    let data = bytes
        .get(h.data_start..h.data_start + n)
        .ok_or_else(|| Error::parse("PNM raster", "truncated pixel data"))?;
    let pixels = if h.maxval == 255 {
        data.to_vec()
    } else {
        data.iter()
            .map(|&v| ((v.min(h.maxval as u8) as usize * 255 + h.maxval / 2) / h.maxval) as u8)
            .collect()
    };
    RasterImage::new(h.width, h.height, h.channels, pixels)
}

/// `(width, height)` from the header alone.
pub fn pnm_dimensions(bytes: &[u8]) -> Result<(usize, usize)> {
    let h = parse_header(bytes)?;
    Ok((h.width, h.height))
}

pub fn encode_pnm(img: &RasterImage) -> Vec<u8> {
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn read_pnm(path: &Path) -> Result<RasterImage> {
    decode_pnm(&binio::read_file(path)?)
}

pub fn write_pnm(path: &Path, img: &RasterImage) -> Result<()> {
    binio::write_atomic(path, &encode_pnm(img))
}
