//! Raster and tensor value types shared by every stage of the pipeline.
//!
//! Every multi-channel buffer uses one layout: planar, row-major. Element
//! `(c, y, x)` of a `C x H x W` buffer lives at `(c * H + y) * W + x`.
//! Converters to interleaved layouts exist only at I/O boundaries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[inline]
pub(crate) fn planar_index(height: usize, width: usize, c: usize, y: usize, x: usize) -> usize {
    (c * height + y) * width + x
}

/// Three-channel color raster with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub const CHANNELS: usize = 3;

    /// Builds an image from planar data, checking the size and value range.
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_raster_dims(width, height)?;
        if data.len() != Self::CHANNELS * width * height {
            return Err(Error::InvalidDimensions(format!(
                "expected {} values for a {width}x{height} image, got {}",
                Self::CHANNELS * width * height,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidValue(format!("image intensity {v} outside [0, 1]")));
        }
        Ok(Self { width, height, data })
    }

    /// Builds an image by evaluating `f(channel, x, y)`; values are clamped to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        check_raster_dims(width, height)?;
        let mut data = Vec::with_capacity(Self::CHANNELS * width * height);
        for c in 0..Self::CHANNELS {
            for y in 0..height {
                for x in 0..width {
                    data.push(clamp_unit(f(c, x, y)));
                }
            }
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, color: [f64; 3]) -> Result<Self> {
        if color.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidValue(format!("fill color {color:?} outside [0, 1]")));
        }
        Self::from_fn(width, height, |c, _, _| color[c])
    }

    /// Promotes a gray raster to color by channel replication.
    pub fn from_gray(gray: &GrayImage) -> Self {
        let mut data = Vec::with_capacity(Self::CHANNELS * gray.data.len());
        for _ in 0..Self::CHANNELS {
            data.extend_from_slice(&gray.data);
        }
        Self {
            width: gray.width,
            height: gray.height,
            data,
        }
    }

    /// Builds an image from planar values that may have drifted outside `[0, 1]`
    /// (clamped), replacing non-finite values by zero.
    pub fn from_planar_clamped(width: usize, height: usize, mut data: Vec<f64>) -> Result<Self> {
        check_raster_dims(width, height)?;
        if data.len() != Self::CHANNELS * width * height {
            return Err(Error::InvalidDimensions(format!(
                "expected {} values, got {}",
                Self::CHANNELS * width * height,
                data.len()
            )));
        }
        for v in &mut data {
            *v = clamp_unit(*v);
        }
        Ok(Self { width, height, data })
    }

    pub(crate) fn from_parts_unchecked(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), Self::CHANNELS * width * height);
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> f64 {
        self.data[planar_index(self.height, self.width, c, y, x)]
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        [self.get(0, x, y), self.get(1, x, y), self.get(2, x, y)]
    }

    pub fn same_size(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn dims(&self) -> String {
        format!("{}x{}", self.width, self.height)
    }
}

/// Single-channel raster with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::InvalidDimensions(format!(
                "{} values for a {width}x{height} gray image",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidValue(format!("gray intensity {v} outside [0, 1]")));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// Unconstrained real-valued `H x W` raster (SSIM maps, gradients, error maps).
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// Per-pixel disparity in pixels plus a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap {
    pub width: usize,
    pub height: usize,
    pub disparity: Vec<f64>,
    pub valid: Vec<bool>,
}

impl DisparityMap {
    /// Builds a map where every finite, non-negative value is valid.
    pub fn from_values(width: usize, height: usize, disparity: Vec<f64>) -> Result<Self> {
        if disparity.len() != width * height {
            return Err(Error::InvalidDimensions(format!(
                "{} disparities for a {width}x{height} map",
                disparity.len()
            )));
        }
        let valid = disparity.iter().map(|d| d.is_finite() && *d >= 0.0).collect();
        Ok(Self {
            width,
            height,
            disparity,
            valid,
        })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            disparity: vec![value; width * height],
            valid: vec![true; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.disparity[y * self.width + x]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn same_size(&self, other: &DisparityMap) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn dims(&self) -> String {
        format!("{}x{}", self.width, self.height)
    }

    /// Checks that valid pixels hold finite disparities in `[0, d_max]`.
    pub fn validate(&self, d_max: f64) -> Result<()> {
        if self.disparity.len() != self.width * self.height || self.valid.len() != self.disparity.len() {
            return Err(Error::InvalidDimensions("disparity buffer size".into()));
        }
        for (d, ok) in self.disparity.iter().zip(&self.valid) {
            if *ok && !(d.is_finite() && *d >= 0.0 && *d <= d_max) {
                return Err(Error::InvalidValue(format!("valid disparity {d} outside [0, {d_max}]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaskKind {
    /// Exact 0/1 labels derived from ground truth.
    Oracle,
    /// Per-pixel probabilities from any external predictor.
    Soft,
}

/// Per-pixel occlusion values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionMask {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    /// Pixels whose label is meaningful; oracle masks mark invalid ground truth here.
    pub valid: Vec<bool>,
    pub kind: MaskKind,
}

impl OcclusionMask {
    pub fn zeros(width: usize, height: usize, kind: MaskKind) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
            valid: vec![true; width * height],
            kind,
        }
    }

    pub fn soft(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        let mask = Self {
            width,
            height,
            valid: vec![true; values.len()],
            values,
            kind: MaskKind::Soft,
        };
        mask.validate()?;
        Ok(mask)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.width * self.height || self.valid.len() != self.values.len() {
            return Err(Error::InvalidDimensions("occlusion mask buffer size".into()));
        }
        for v in &self.values {
            let ok = match self.kind {
                MaskKind::Oracle => *v == 0.0 || *v == 1.0,
                MaskKind::Soft => (0.0..=1.0).contains(v),
            };
            if !ok {
                return Err(Error::InvalidValue(format!(
                    "occlusion value {v} not allowed for {:?} mask",
                    self.kind
                )));
            }
        }
        Ok(())
    }

    /// Reinterprets the mask as probabilities.
    pub fn into_soft(mut self) -> Self {
        self.kind = MaskKind::Soft;
        self
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn dims(&self) -> String {
        format!("{}x{}", self.width, self.height)
    }
}

/// `C x H x W` tensor of per-pixel descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidDimensions("feature map needs C >= 1".into()));
        }
        if data.len() != channels * height * width {
            return Err(Error::InvalidDimensions(format!(
                "{} values for a {channels}x{height}x{width} feature map",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue("non-finite feature value".into()));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[planar_index(self.height, self.width, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        let i = planar_index(self.height, self.width, c, y, x);
        self.data[i] = v;
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn same_shape(&self, other: &FeatureMap) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }

    pub fn shape(&self) -> String {
        format!("{}x{}x{}", self.channels, self.height, self.width)
    }

    /// The feature vector at one spatial position.
    pub fn pixel_vector(&self, y: usize, x: usize) -> Vec<f64> {
        (0..self.channels).map(|c| self.get(c, y, x)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarity {
    /// Higher values mean better matches.
    Similarity,
    /// Lower values mean better matches.
    Cost,
}

/// `D x H x W` matching-score tensor with an explicit validity volume.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    pub disparities: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
    /// `false` where the candidate match falls outside the right view.
    pub valid: Vec<bool>,
    pub polarity: Polarity,
}

impl CostVolume {
    pub fn new(
        disparities: usize,
        height: usize,
        width: usize,
        data: Vec<f64>,
        valid: Vec<bool>,
        polarity: Polarity,
    ) -> Result<Self> {
        let n = disparities * height * width;
        if disparities == 0 || data.len() != n || valid.len() != n {
            return Err(Error::InvalidDimensions(format!(
                "cost volume {disparities}x{height}x{width} with {} values / {} flags",
                data.len(),
                valid.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue("non-finite cost".into()));
        }
        Ok(Self {
            disparities,
            height,
            width,
            data,
            valid,
            polarity,
        })
    }

    #[inline]
    pub fn index(&self, d: usize, y: usize, x: usize) -> usize {
        planar_index(self.height, self.width, d, y, x)
    }

    #[inline]
    pub fn get(&self, d: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(d, y, x)]
    }

    #[inline]
    pub fn is_valid(&self, d: usize, y: usize, x: usize) -> bool {
        self.valid[self.index(d, y, x)]
    }
}

fn check_raster_dims(width: usize, height: usize) -> Result<()> {
    if width < 2 || height < 2 {
        return Err(Error::InvalidDimensions(format!(
            "images must be at least 2x2, got {width}x{height}"
        )));
    }
    Ok(())
}

#[inline]
fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// Bilinear interpolation at continuous coordinates `(x, y)`.
///
/// Returns the interpolated color and whether every neighbor that contributes
/// with non-zero weight lies inside the raster. Out-of-bounds samples are all
/// zero so callers can exclude them rather than see clamped edge values.
pub fn bilinear_sample(img: &Image, x: f64, y: f64) -> ([f64; 3], bool) {
    let max_x = (img.width - 1) as f64;
    let max_y = (img.height - 1) as f64;
    if !(x >= 0.0 && y >= 0.0 && x <= max_x && y <= max_y) {
        return ([0.0; 3], false);
    }
    let fx0 = x.floor();
    let fy0 = y.floor();
    let tx = x - fx0;
    let ty = y - fy0;
    let x0 = fx0 as usize;
    let y0 = fy0 as usize;
    // A zero fractional part means the far neighbor has zero weight.
    let x1 = if tx > 0.0 { x0 + 1 } else { x0 };
    let y1 = if ty > 0.0 { y0 + 1 } else { y0 };

    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let p00 = img.get(c, x0, y0);
        let p10 = img.get(c, x1, y0);
        let p01 = img.get(c, x0, y1);
        let p11 = img.get(c, x1, y1);
        *o = (1.0 - ty) * ((1.0 - tx) * p00 + tx * p10) + ty * ((1.0 - tx) * p01 + tx * p11);
    }
    (out, true)
}

pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Luminance `0.299 R + 0.587 G + 0.114 B`.
pub fn to_grayscale(img: &Image) -> GrayImage {
    let (r, g, b) = (img.channel(0), img.channel(1), img.channel(2));
    let data = r
        .iter()
        .zip(g)
        .zip(b)
        .map(|((r, g), b)| (LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b).clamp(0.0, 1.0))
        .collect();
    GrayImage {
        width: img.width,
        height: img.height,
        data,
    }
}
