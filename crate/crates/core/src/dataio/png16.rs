//! 16-bit grayscale PNG disparity maps: `disparity = raw / 256`, raw 0 is invalid.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma};

use crate::error::{Error, Result};
use crate::types::DisparityMap;

pub const PNG16_SCALE: f64 = 256.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawU16 {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u16>,
}

fn codec(path: &Path, source: image::ImageError) -> Error {
    Error::Codec {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_png16_raw(path: &Path) -> Result<RawU16> {
    let img = image::open(path).map_err(|e| codec(path, e))?;
    match img {
        DynamicImage::ImageLuma16(buf) => Ok(RawU16 {
            width: buf.width() as usize,
            height: buf.height() as usize,
            data: buf.into_raw(),
        }),
        other => Err(Error::Format {
            format: "PNG16",
            path: path.to_path_buf(),
            reason: format!("expected 16-bit single-channel, got {:?}", other.color()),
        }),
    }
}

pub fn write_png16_raw(path: &Path, raw: &RawU16) -> Result<()> {
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(raw.width as u32, raw.height as u32, raw.data.clone()).ok_or_else(|| {
            Error::InvalidDimensions(format!("{} samples for {}x{}", raw.data.len(), raw.width, raw.height))
        })?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| codec(path, e))
}

pub fn raw_to_disparity(raw: &RawU16) -> DisparityMap {
    DisparityMap {
        width: raw.width,
        height: raw.height,
        disparity: raw.data.iter().map(|v| f64::from(*v) / PNG16_SCALE).collect(),
        valid: raw.data.iter().map(|v| *v != 0).collect(),
    }
}

/// Valid disparities are rounded to the nearest 1/256 and saturated to the
/// u16 range. A valid disparity that rounds to 0 cannot be told apart from an
/// invalid pixel and reads back as invalid.
pub fn disparity_to_raw(map: &DisparityMap) -> RawU16 {
    RawU16 {
        width: map.width,
        height: map.height,
        data: map
            .disparity
            .iter()
            .zip(&map.valid)
            .map(|(d, ok)| {
                if *ok {
                    (d * PNG16_SCALE).round().clamp(0.0, 65535.0) as u16
                } else {
                    0
                }
            })
            .collect(),
    }
}

pub fn read_disparity_png16(path: &Path) -> Result<DisparityMap> {
    Ok(raw_to_disparity(&read_png16_raw(path)?))
}

pub fn write_disparity_png16(path: &Path, map: &DisparityMap) -> Result<()> {
    write_png16_raw(path, &disparity_to_raw(map))
}
