//! Random-dot stereo pairs with exact ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reconstruction::occlusion_oracle;
use crate::types::{DisparityMap, Image, OcclusionMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    /// Half-size rectangle centered in a `width x height` frame, on even coordinates.
    pub fn centered(width: usize, height: usize) -> Self {
        let even = |v: usize| v & !1;
        let (w, h) = (even(width / 2), even(height / 2));
        Self {
            x: even((width - w) / 2),
            y: even((height - h) / 2),
            width: w,
            height: h,
        }
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.width && y >= self.y && y < self.y + self.height
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthPair {
    pub left: Image,
    pub right: Image,
    pub gt_disp: DisparityMap,
    pub gt_occ: OcclusionMask,
    pub foreground: Rect,
}

/// Builds a pair where a foreground rectangle `F` sits `shift` pixels in front
/// of a zero-disparity background.
///
/// The left view shows texture `T` inside `F` and texture `B` elsewhere. The
/// right view shows `T(u + shift)` where `u + shift` lands in `F` and `B(u)`
/// otherwise, so the band of width `shift` left of `F` is occluded.
pub fn synth_rds(width: usize, height: usize, shift: usize, occluder: Option<Rect>, seed: u64) -> Result<SynthPair> {
    if width < 8 || height < 2 {
        return Err(Error::InvalidDimensions(format!(
            "synthetic pair needs at least 8x2, got {width}x{height}"
        )));
    }
    if shift >= width / 4 {
        return Err(Error::InvalidConfig(format!(
            "shift must be < width/4 = {}, got {shift}",
            width / 4
        )));
    }
    let fg = occluder.unwrap_or_else(|| Rect::centered(width, height));
    if fg.x + fg.width > width || fg.y + fg.height > height {
        return Err(Error::InvalidConfig(format!(
            "foreground {fg:?} exceeds the {width}x{height} frame"
        )));
    }
    if fg.width > 0 && fg.x < shift {
        return Err(Error::InvalidConfig(format!(
            "foreground starts at x={} so its occluded band of width {shift} leaves the frame",
            fg.x
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = width * height;
    let background: Vec<f64> = (0..3 * n).map(|_| rng.random()).collect();
    let texture: Vec<f64> = (0..3 * n).map(|_| rng.random()).collect();

    let left = Image::from_fn(width, height, |c, x, y| {
        let src = if fg.contains(x, y) { &texture } else { &background };
        src[c * n + y * width + x]
    })?;
    let right = Image::from_fn(width, height, |c, u, y| {
        if fg.contains(u + shift, y) {
            texture[c * n + y * width + u + shift]
        } else {
            background[c * n + y * width + u]
        }
    })?;
    let gt_disp = DisparityMap::from_values(
        width,
        height,
        (0..n)
            .map(|i| {
                if fg.contains(i % width, i / width) {
                    shift as f64
                } else {
                    0.0
                }
            })
            .collect(),
    )?;
    let gt_occ = occlusion_oracle(&gt_disp);

    // the collision oracle must reproduce the geometric band [x0 - shift, x0)
    let band_matches = (0..n).all(|i| {
        let (x, y) = (i % width, i / width);
        let in_band = fg.width > 0 && y >= fg.y && y < fg.y + fg.height && x + shift >= fg.x && x < fg.x;
        (gt_occ.values[i] == 1.0) == in_band
    });
    if !band_matches {
        return Err(Error::InvalidValue(
            "occlusion oracle disagrees with the construction".into(),
        ));
    }
    Ok(SynthPair {
        left,
        right,
        gt_disp,
        gt_occ,
        foreground: fg,
    })
}
