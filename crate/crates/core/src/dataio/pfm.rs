//! Portable float map codec.
//!
//! Layout: `Pf` (one channel) or `PF` (three channels), the dimensions, then a
//! scale whose sign selects the byte order (negative means little-endian),
//! each terminated by whitespace, then `f32` samples stored bottom row first.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::DisparityMap;

#[derive(Debug, Clone, PartialEq)]
pub struct PfmRaster {
    pub width: usize,
    pub height: usize,
    /// 1 or 3.
    pub channels: usize,
    /// Interleaved samples, top row first.
    pub data: Vec<f32>,
    /// Magnitude of the scale field.
    pub scale: f32,
    pub little_endian: bool,
}

impl PfmRaster {
    pub fn from_disparity(map: &DisparityMap) -> Self {
        Self {
            width: map.width,
            height: map.height,
            channels: 1,
            data: map
                .disparity
                .iter()
                .zip(&map.valid)
                .map(|(d, ok)| if *ok { *d as f32 } else { f32::NAN })
                .collect(),
            scale: 1.0,
            little_endian: true,
        }
    }

    /// Single-channel raster as a disparity map; NaN, infinite and negative
    /// samples become invalid pixels.
    pub fn to_disparity(&self) -> Result<DisparityMap> {
        if self.channels != 1 {
            return Err(Error::InvalidValue(format!(
                "disparity needs a single-channel PFM, got {} channels",
                self.channels
            )));
        }
        DisparityMap::from_values(
            self.width,
            self.height,
            self.data.iter().map(|v| f64::from(*v)).collect(),
        )
    }
}

fn malformed(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        format: "PFM",
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Parses PFM bytes; `path` is only used in error messages.
pub fn decode_pfm(bytes: &[u8], path: &Path) -> Result<PfmRaster> {
    let mut pos = 0;
    let mut token = |what: &str| -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos || pos >= bytes.len() {
            return Err(malformed(path, format!("missing {what}")));
        }
        let t = std::str::from_utf8(&bytes[start..pos]).map_err(|_| malformed(path, format!("non-ASCII {what}")))?;
        Ok(t.to_string())
    };
    let channels = match token("magic")?.as_str() {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(malformed(path, format!("bad magic {other:?}"))),
    };
    let width: usize = token("width")?.parse().map_err(|_| malformed(path, "bad width"))?;
    let height: usize = token("height")?.parse().map_err(|_| malformed(path, "bad height"))?;
    let scale: f32 = token("scale")?.parse().map_err(|_| malformed(path, "bad scale"))?;
    if width == 0 || height == 0 {
        return Err(malformed(path, format!("empty raster {width}x{height}")));
    }
    if scale == 0.0 || !scale.is_finite() {
        return Err(malformed(path, format!("scale {scale} does not encode a byte order")));
    }
    // exactly one whitespace byte separates the header from the payload
    let payload = &bytes[pos + 1..];
    let expected = width * height * channels * 4;
    if payload.len() < expected {
        return Err(malformed(
            path,
            format!("truncated payload: {} of {expected} bytes", payload.len()),
        ));
    }
    if payload.len() > expected {
        return Err(malformed(path, format!("{} trailing bytes", payload.len() - expected)));
    }
    let little_endian = scale < 0.0;
    let row_len = width * channels;
    let mut data = vec![0.0f32; row_len * height];
    for (k, chunk) in payload.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little_endian {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (file_row, col) = (k / row_len, k % row_len);
        data[(height - 1 - file_row) * row_len + col] = v;
    }
    Ok(PfmRaster {
        width,
        height,
        channels,
        data,
        scale: scale.abs(),
        little_endian,
    })
}

pub fn encode_pfm(raster: &PfmRaster) -> Result<Vec<u8>> {
    let magic = match raster.channels {
        1 => "Pf",
        3 => "PF",
        c => return Err(Error::InvalidValue(format!("PFM holds 1 or 3 channels, got {c}"))),
    };
    if raster.data.len() != raster.width * raster.height * raster.channels {
        return Err(Error::InvalidDimensions(format!(
            "{} samples for a {}x{}x{} raster",
            raster.data.len(),
            raster.width,
            raster.height,
            raster.channels
        )));
    }
    let scale = if raster.little_endian {
        -raster.scale.abs()
    } else {
        raster.scale.abs()
    };
    let mut out = format!("{magic}\n{} {}\n{scale:?}\n", raster.width, raster.height).into_bytes();
    let row_len = raster.width * raster.channels;
    for row in raster.data.chunks_exact(row_len).rev() {
        for v in row {
            out.extend_from_slice(&if raster.little_endian {
                v.to_le_bytes()
            } else {
                v.to_be_bytes()
            });
        }
    }
    Ok(out)
}

pub fn read_pfm(path: &Path) -> Result<PfmRaster> {
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_pfm(&bytes, path)
}

pub fn write_pfm(path: &Path, raster: &PfmRaster) -> Result<()> {
    fs::write(path, encode_pfm(raster)?).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_disparity_pfm(path: &Path) -> Result<DisparityMap> {
    read_pfm(path)?.to_disparity()
}

/// Invalid pixels are written as NaN.
pub fn write_disparity_pfm(path: &Path, map: &DisparityMap) -> Result<()> {
    write_pfm(path, &PfmRaster::from_disparity(map))
}
