//! 8-bit image codecs: binary PPM (P6) and PNG.

use std::io::Cursor;

use serde::{Deserialize, Serialize};

use crate::color::RgbColor;
use crate::error::{LutError, Result};
use crate::image::ImageBuffer;

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0D, 0x0A, 0x1A, 0x0A];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    Ppm,
    Png,
}

impl ImageFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &std::path::Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "ppm" | "pnm" => Some(ImageFormat::Ppm),
            "png" => Some(ImageFormat::Png),
            _ => None,
        }
    }
}

#[inline]
fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn to_rgb8(img: &ImageBuffer) -> Vec<u8> {
    img.pixels()
        .iter()
        .flat_map(|p| [quantize(p.r), quantize(p.g), quantize(p.b)])
        .collect()
}

fn from_rgb8(width: usize, height: usize, data: &[u8]) -> Result<ImageBuffer> {
    let pixels = data
        .chunks_exact(3)
        .map(|c| RgbColor::new(c[0] as f64 / 255.0, c[1] as f64 / 255.0, c[2] as f64 / 255.0))
        .collect();
    ImageBuffer::new(width, height, pixels)
}

/// Decodes a P6 or PNG image, detected by magic bytes.
pub fn read_image(bytes: &[u8]) -> Result<ImageBuffer> {
    if bytes.starts_with(b"P6") {
        read_ppm(bytes)
    } else if bytes.starts_with(&PNG_SIGNATURE) {
        read_png(bytes)
    } else {
        Err(LutError::UnsupportedFormat)
    }
}

pub fn write_image(img: &ImageBuffer, format: ImageFormat) -> Result<Vec<u8>> {
    match format {
        ImageFormat::Ppm => Ok(write_ppm(img)),
        ImageFormat::Png => write_png(img),
    }
}

pub fn write_ppm(img: &ImageBuffer) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(to_rgb8(img));
    out
}

fn read_ppm(bytes: &[u8]) -> Result<ImageBuffer> {
    // Header: magic, width, height, maxval, separated by whitespace and
    // `#` comments, then exactly one whitespace byte before the raster.
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                None => return Err(LutError::TruncatedData),
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(if pos >= bytes.len() {
                LutError::TruncatedData
            } else {
                LutError::UnsupportedFormat
            });
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(LutError::UnsupportedFormat)?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(LutError::UnsupportedFormat);
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        None => return Err(LutError::TruncatedData),
        Some(_) => return Err(LutError::UnsupportedFormat),
    }
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or(LutError::UnsupportedFormat)?;
    let raster = &bytes[pos..];
    if raster.len() < need {
        return Err(LutError::TruncatedData);
    }
    from_rgb8(width, height, &raster[..need])
}

fn codec<E: std::fmt::Display>(e: E) -> LutError {
    LutError::Codec(e.to_string())
}

fn read_png(bytes: &[u8]) -> Result<ImageBuffer> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| match e {
        png::DecodingError::IoError(_) => LutError::TruncatedData,
        other => codec(other),
    })?;
    let size = reader.output_buffer_size().ok_or(LutError::UnsupportedFormat)?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| match e {
        png::DecodingError::IoError(_) => LutError::TruncatedData,
        other => codec(other),
    })?;
    let (w, h) = (info.width as usize, info.height as usize);
    let data = &buf[..info.buffer_size()];
    let rgb: Vec<u8> = match info.color_type {
        png::ColorType::Rgb => data.to_vec(),
        png::ColorType::Rgba => data.chunks_exact(4).flat_map(|c| [c[0], c[1], c[2]]).collect(),
        png::ColorType::Grayscale => data.iter().flat_map(|&g| [g, g, g]).collect(),
        png::ColorType::GrayscaleAlpha => data.chunks_exact(2).flat_map(|c| [c[0], c[0], c[0]]).collect(),
        png::ColorType::Indexed => return Err(LutError::UnsupportedFormat),
    };
    if rgb.len() != w * h * 3 {
        return Err(LutError::TruncatedData);
    }
    from_rgb8(w, h, &rgb)
}

fn write_png(img: &ImageBuffer) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width() as u32, img.height() as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(codec)?;
        writer.write_image_data(&to_rgb8(img)).map_err(codec)?;
        writer.finish().map_err(codec)?;
    }
    Ok(out)
}
