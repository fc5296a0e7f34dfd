//! Raster decoding (PNG, binary PGM/PPM) and PGM/PPM encoding.
//!
//! Decoded samples are scaled to `[0, 1]`. PNG alpha is dropped and 16-bit PNGs are
//! reduced to 8 bits; netpbm files with a maxval above 255 are rejected.

use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::Raster;

const PNG_SIGNATURE: &[u8; 8] = b"\x89PNG\r\n\x1a\n";

pub fn read_raster(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_raster(&bytes).map_err(|e| match e {
        Error::Raster(msg) => Error::Raster(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Sniffs the format from the leading bytes.
pub fn decode_raster(bytes: &[u8]) -> Result<Raster> {
    if bytes.starts_with(PNG_SIGNATURE) {
        decode_png(bytes)
    } else if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        decode_netpbm(bytes)
    } else {
        Err(Error::Raster("unrecognized image format (expected PNG, P5 or P6)".into()))
    }
}

fn decode_png(bytes: &[u8]) -> Result<Raster> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| Error::Raster(format!("png: {e}")))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Raster("png: image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Raster(format!("png: {e}")))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let src_channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => return Err(Error::Raster("png: palette not expanded".into())),
    };
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Raster(format!("png: unsupported bit depth {:?}", info.bit_depth)));
    }
    let out_channels = if src_channels < 3 { 1 } else { 3 };
    let mut data = Vec::with_capacity(w * h * out_channels);
    for row in buf.chunks(info.line_size).take(h) {
        for px in row[..w * src_channels].chunks_exact(src_channels) {
            data.extend(px[..out_channels].iter().map(|&b| f64::from(b) / 255.0));
        }
    }
    Raster::new(w, h, out_channels, data)
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

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Raster(format!("netpbm: missing or invalid {what}")))
    }
}

fn decode_netpbm(bytes: &[u8]) -> Result<Raster> {
    let channels = if bytes[1] == b'5' { 1 } else { 3 };
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Raster(format!("netpbm: invalid maxval {maxval}")));
    }
    if maxval > 255 {
        return Err(Error::Raster(format!("netpbm: unsupported bit depth (maxval {maxval})")));
    }
    if !bytes.get(cur.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Raster("netpbm: header must end with one whitespace byte".into()));
    }
    let payload = &bytes[cur.pos + 1..];
    let need = width * height * channels;
    if payload.len() < need {
        return Err(Error::Raster(format!(
            "netpbm: truncated payload ({} of {need} bytes)",
            payload.len()
        )));
    }
    let scale = maxval as f64;
    let data = payload[..need].iter().map(|&b| f64::from(b) / scale).collect();
    Raster::new(width, height, channels, data)
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn encode_netpbm(magic: &str, width: usize, height: usize, samples: impl Iterator<Item = u8>) -> Vec<u8> {
    let mut out = format!("{magic}\n{width} {height}\n255\n").into_bytes();
    out.extend(samples);
    out
}

/// Encodes the luma of `img` as an 8-bit P5 file.
pub fn encode_pgm(img: &Raster) -> Vec<u8> {
    let luma = img.to_luma();
    encode_netpbm("P5", luma.width(), luma.height(), luma.data().iter().map(|&v| quantize(v)))
}

/// Encodes `img` as an 8-bit P6 file; gray rasters are replicated across channels.
pub fn encode_ppm(img: &Raster) -> Vec<u8> {
    let c = img.channels();
    let samples = img
        .data()
        .chunks_exact(c)
        .flat_map(move |px| (0..3).map(move |k| quantize(px[k.min(c - 1)])));
    encode_netpbm("P6", img.width(), img.height(), samples)
}

/// Writes raw 8-bit gray bytes as P5.
pub fn write_pgm(path: impl AsRef<Path>, width: usize, height: usize, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    if bytes.len() != width * height {
        return Err(Error::Shape(format!(
            "pgm {width}x{height} needs {} bytes, got {}",
            width * height,
            bytes.len()
        )));
    }
    std::fs::write(path, encode_netpbm("P5", width, height, bytes.iter().copied()))
        .map_err(|e| Error::io(path, e))
}
