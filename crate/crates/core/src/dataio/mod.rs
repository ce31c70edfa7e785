//! File codecs, dataset layouts and the synthetic stereo generator.

pub mod layout;
pub mod pfm;
pub mod png16;
pub mod synth;

use std::path::Path;

use image::DynamicImage;

use crate::error::{Error, Result};
use crate::metrics::SemanticMap;
use crate::types::{DisparityMap, Image, OcclusionMask};

pub use layout::{list_pairs, DatasetLayout, DatasetSpec, Listing, PairEntry};
pub use pfm::{read_disparity_pfm, read_pfm, write_disparity_pfm, write_pfm, PfmRaster};
pub use png16::{read_disparity_png16, write_disparity_png16};
pub use synth::{synth_rds, Rect, SynthPair};

fn codec(path: &Path, source: image::ImageError) -> Error {
    Error::Codec {
        path: path.to_path_buf(),
        source,
    }
}

/// Loads an image as RGB in `[0, 1]`. Gray inputs are replicated to three
/// channels and alpha is dropped.
pub fn load_image(path: &Path) -> Result<Image> {
    let img = image::open(path).map_err(|e| codec(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let rgb: Vec<f64> = match img {
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) => {
            let g = img.to_luma8();
            let plane: Vec<f64> = g.as_raw().iter().map(|v| f64::from(*v) / 255.0).collect();
            plane.repeat(3)
        }
        DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_) => {
            let g = img.to_luma16();
            let plane: Vec<f64> = g.as_raw().iter().map(|v| f64::from(*v) / 65535.0).collect();
            plane.repeat(3)
        }
        DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_) => {
            let buf = img.to_rgb16();
            planar(buf.as_raw(), w * h, 65535.0)
        }
        _ => {
            let buf = img.to_rgb8();
            planar(buf.as_raw(), w * h, 255.0)
        }
    };
    Image::new(w, h, rgb)
}

fn planar<T: Copy + Into<f64>>(interleaved: &[T], n: usize, max: f64) -> Vec<f64> {
    let mut out = vec![0.0; 3 * n];
    for (i, px) in interleaved.chunks_exact(3).enumerate() {
        for c in 0..3 {
            out[c * n + i] = px[c].into() / max;
        }
    }
    out
}

/// Saves an 8-bit RGB PNG.
pub fn save_image(path: &Path, img: &Image) -> Result<()> {
    let (w, h) = (img.width(), img.height());
    let n = w * h;
    let d = img.data();
    let mut bytes = Vec::with_capacity(3 * n);
    for i in 0..n {
        for c in 0..3 {
            bytes.push((d[c * n + i] * 255.0).round().clamp(0.0, 255.0) as u8);
        }
    }
    let buf = image::RgbImage::from_raw(w as u32, h as u32, bytes)
        .ok_or_else(|| Error::InvalidDimensions(format!("{w}x{h} image buffer")))?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| codec(path, e))
}

/// Reads a ground-truth disparity map, choosing the codec by extension.
pub fn read_disparity(path: &Path) -> Result<DisparityMap> {
    match extension(path).as_str() {
        "pfm" => read_disparity_pfm(path),
        "png" => read_disparity_png16(path),
        other => Err(Error::Format {
            format: "disparity",
            path: path.to_path_buf(),
            reason: format!("unsupported extension {other:?}"),
        }),
    }
}

pub(crate) fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default()
}

/// Grayscale disparity preview scaled so `max_disp` maps to white; invalid pixels are black.
pub fn save_disparity_preview(path: &Path, map: &DisparityMap, max_disp: f64) -> Result<()> {
    let scale = if max_disp > 0.0 { 255.0 / max_disp } else { 0.0 };
    let bytes: Vec<u8> = map
        .disparity
        .iter()
        .zip(&map.valid)
        .map(|(d, ok)| {
            if *ok {
                (d * scale).round().clamp(0.0, 255.0) as u8
            } else {
                0
            }
        })
        .collect();
    let buf = image::GrayImage::from_raw(map.width as u32, map.height as u32, bytes)
        .ok_or_else(|| Error::InvalidDimensions(format!("{} preview", map.dims())))?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| codec(path, e))
}

/// Reads occlusion probabilities from a single-channel PNG (scaled by its
/// bit depth) or PFM (values taken as they are, then checked against `[0, 1]`).
pub fn read_occlusion(path: &Path) -> Result<OcclusionMask> {
    if extension(path) == "pfm" {
        let r = read_pfm(path)?;
        if r.channels != 1 {
            return Err(Error::InvalidValue(format!(
                "occlusion PFM needs one channel, got {}",
                r.channels
            )));
        }
        return OcclusionMask::soft(r.width, r.height, r.data.iter().map(|v| f64::from(*v)).collect());
    }
    let img = image::open(path).map_err(|e| codec(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(|v| f64::from(v) / 255.0).collect(),
        DynamicImage::ImageLuma16(buf) => buf.into_raw().into_iter().map(|v| f64::from(v) / 65535.0).collect(),
        other => {
            return Err(Error::Format {
                format: "occlusion PNG",
                path: path.to_path_buf(),
                reason: format!("expected a single channel, got {:?}", other.color()),
            })
        }
    };
    OcclusionMask::soft(w, h, values)
}

/// Writes an occlusion mask as an 8-bit PNG (0 visible, 255 occluded).
pub fn save_occlusion(path: &Path, occ: &OcclusionMask) -> Result<()> {
    let bytes = occ
        .values
        .iter()
        .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    let buf = image::GrayImage::from_raw(occ.width as u32, occ.height as u32, bytes)
        .ok_or_else(|| Error::InvalidDimensions(format!("{} mask", occ.dims())))?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| codec(path, e))
}

/// Reads an 8- or 16-bit single-channel PNG of class ids.
pub fn read_semantic(path: &Path) -> Result<SemanticMap> {
    let img = image::open(path).map_err(|e| codec(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let ids = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(u16::from).collect(),
        DynamicImage::ImageLuma16(buf) => buf.into_raw(),
        other => {
            return Err(Error::Format {
                format: "semantic PNG",
                path: path.to_path_buf(),
                reason: format!("expected single-channel ids, got {:?}", other.color()),
            })
        }
    };
    SemanticMap::new(w, h, ids)
}
