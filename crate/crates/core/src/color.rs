//! Color-space conversion, per-channel statistics and progressive color transfer.
//!
//! Transfer recolors a source stereo pair toward target-domain statistics with
//! one per-channel affine map, `x' = (sigma_t / sigma_s) * (x - mu_s) + mu_t`,
//! where `(mu_t, sigma_t)` is a momentum average over the target images seen so far.

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Image;

/// Below this source standard deviation a channel is treated as flat and not rescaled.
pub const FLAT_CHANNEL_STD: f64 = 1e-6;

/// Intensity floor applied before the logarithm of the log-space transform.
pub const LOG_FLOOR: f64 = 1.0 / 255.0;

pub const DEFAULT_GAMMA: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum WorkingSpace {
    /// Decorrelated log-LMS space (`l`, `alpha`, `beta` axes).
    #[default]
    LogLab,
    /// CIE L*a*b* with a D65 white point, on sRGB-encoded input.
    CieLab,
}

impl FromStr for WorkingSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log-lab" => Ok(Self::LogLab),
            "cielab" => Ok(Self::CieLab),
            other => Err(Error::InvalidConfig(format!(
                "unknown color space `{other}` (expected log-lab or cielab)"
            ))),
        }
    }
}

impl fmt::Display for WorkingSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::LogLab => "log-lab",
            Self::CieLab => "cielab",
        })
    }
}

struct LogLabMatrices {
    rgb_to_lms: Matrix3<f64>,
    lms_to_rgb: Matrix3<f64>,
    log_to_lab: Matrix3<f64>,
    lab_to_log: Matrix3<f64>,
}

static LOG_LAB: LazyLock<LogLabMatrices> = LazyLock::new(|| {
    #[rustfmt::skip]
    let rgb_to_lms = Matrix3::new(
        0.3811, 0.5783, 0.0402,
        0.1967, 0.7244, 0.0782,
        0.0241, 0.1288, 0.8444,
    );
    #[rustfmt::skip]
    let mix = Matrix3::new(
        1.0,  1.0,  1.0,
        1.0,  1.0, -2.0,
        1.0, -1.0,  0.0,
    );
    let scale = Matrix3::from_diagonal(&Vector3::new(1.0 / 3f64.sqrt(), 1.0 / 6f64.sqrt(), 1.0 / 2f64.sqrt()));
    let log_to_lab = scale * mix;
    LogLabMatrices {
        rgb_to_lms,
        lms_to_rgb: rgb_to_lms.try_inverse().expect("LMS matrix is invertible"),
        log_to_lab,
        lab_to_log: log_to_lab.try_inverse().expect("decorrelation matrix is invertible"),
    }
});

struct CieLabConstants {
    rgb_to_xyz: Matrix3<f64>,
    xyz_to_rgb: Matrix3<f64>,
    white: Vector3<f64>,
}

static CIE_LAB: LazyLock<CieLabConstants> = LazyLock::new(|| {
    // linear sRGB -> XYZ, D65
    #[rustfmt::skip]
    let rgb_to_xyz = Matrix3::new(
        0.4124564, 0.3575761, 0.1804375,
        0.2126729, 0.7151522, 0.0721750,
        0.0193339, 0.1191920, 0.9503041,
    );
    CieLabConstants {
        rgb_to_xyz,
        xyz_to_rgb: rgb_to_xyz.try_inverse().expect("sRGB matrix is invertible"),
        white: rgb_to_xyz * Vector3::new(1.0, 1.0, 1.0),
    }
});

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn linear_to_srgb(c: f64) -> f64 {
    if c <= 0.0031308 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

const LAB_DELTA: f64 = 6.0 / 29.0;

fn lab_f(t: f64) -> f64 {
    if t > LAB_DELTA * LAB_DELTA * LAB_DELTA {
        t.cbrt()
    } else {
        t / (3.0 * LAB_DELTA * LAB_DELTA) + 4.0 / 29.0
    }
}

fn lab_f_inv(t: f64) -> f64 {
    if t > LAB_DELTA {
        t * t * t
    } else {
        3.0 * LAB_DELTA * LAB_DELTA * (t - 4.0 / 29.0)
    }
}

fn pixel_to_working(rgb: Vector3<f64>, space: WorkingSpace) -> Vector3<f64> {
    match space {
        WorkingSpace::LogLab => {
            let m = &*LOG_LAB;
            let floored = rgb.map(|v| v.max(LOG_FLOOR));
            let lms = m.rgb_to_lms * floored;
            m.log_to_lab * lms.map(f64::log10)
        }
        WorkingSpace::CieLab => {
            let k = &*CIE_LAB;
            let xyz = k.rgb_to_xyz * rgb.map(srgb_to_linear);
            let fx = lab_f(xyz.x / k.white.x);
            let fy = lab_f(xyz.y / k.white.y);
            let fz = lab_f(xyz.z / k.white.z);
            Vector3::new(116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz))
        }
    }
}

fn pixel_to_rgb(v: Vector3<f64>, space: WorkingSpace) -> Vector3<f64> {
    match space {
        WorkingSpace::LogLab => {
            let m = &*LOG_LAB;
            // keeps 10^x finite for wildly out-of-gamut inputs
            let log_lms = (m.lab_to_log * v).map(|t| t.clamp(-12.0, 12.0));
            m.lms_to_rgb * log_lms.map(|t| 10f64.powf(t))
        }
        WorkingSpace::CieLab => {
            let k = &*CIE_LAB;
            let fy = (v.x + 16.0) / 116.0;
            let fx = fy + v.y / 500.0;
            let fz = fy - v.z / 200.0;
            let xyz = Vector3::new(
                k.white.x * lab_f_inv(fx),
                k.white.y * lab_f_inv(fy),
                k.white.z * lab_f_inv(fz),
            );
            (k.xyz_to_rgb * xyz).map(linear_to_srgb)
        }
    }
}

/// Planar `3 x H x W` raster in a working color space. Values are unbounded.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkingRaster {
    pub width: usize,
    pub height: usize,
    pub space: WorkingSpace,
    pub data: Vec<f64>,
}

impl WorkingRaster {
    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }
}

pub fn rgb_to_working(img: &Image, space: WorkingSpace) -> WorkingRaster {
    let n = img.width() * img.height();
    let mut data = vec![0.0; 3 * n];
    let (r, g, b) = (img.channel(0), img.channel(1), img.channel(2));
    for i in 0..n {
        let w = pixel_to_working(Vector3::new(r[i], g[i], b[i]), space);
        data[i] = w.x;
        data[n + i] = w.y;
        data[2 * n + i] = w.z;
    }
    WorkingRaster {
        width: img.width(),
        height: img.height(),
        space,
        data,
    }
}

/// Inverse conversion; the result is clamped to `[0, 1]`.
pub fn working_to_rgb(raster: &WorkingRaster) -> Result<Image> {
    let n = raster.width * raster.height;
    if raster.data.len() != 3 * n {
        return Err(Error::InvalidDimensions(format!(
            "{} values for a 3x{}x{} raster",
            raster.data.len(),
            raster.height,
            raster.width
        )));
    }
    let mut data = vec![0.0; 3 * n];
    for i in 0..n {
        let v = Vector3::new(raster.data[i], raster.data[n + i], raster.data[2 * n + i]);
        let rgb = pixel_to_rgb(v, raster.space);
        data[i] = rgb.x;
        data[n + i] = rgb.y;
        data[2 * n + i] = rgb.z;
    }
    Image::from_planar_clamped(raster.width, raster.height, data)
}

/// Per-channel mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

pub fn channel_stats(raster: &WorkingRaster) -> ColorStats {
    let mut mean = [0.0; 3];
    let mut std = [0.0; 3];
    for c in 0..3 {
        // Welford accumulation
        let (mut m, mut s2, mut k) = (0.0f64, 0.0f64, 0.0f64);
        for &v in raster.channel(c) {
            k += 1.0;
            let delta = v - m;
            m += delta / k;
            s2 += delta * (v - m);
        }
        mean[c] = m;
        std[c] = if k > 0.0 { (s2 / k).max(0.0).sqrt() } else { 0.0 };
    }
    ColorStats { mean, std }
}

/// Running target-domain statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferState {
    pub running_mean: [f64; 3],
    pub running_std: [f64; 3],
    pub gamma: f64,
    pub initialized: bool,
    pub space: WorkingSpace,
}

impl TransferState {
    pub fn new(gamma: f64, space: WorkingSpace) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidConfig(format!("gamma {gamma} outside [0, 1]")));
        }
        Ok(Self {
            running_mean: [0.0; 3],
            running_std: [0.0; 3],
            gamma,
            initialized: false,
            space,
        })
    }

    pub fn target(&self) -> ColorStats {
        ColorStats {
            mean: self.running_mean,
            std: self.running_std,
        }
    }
}

impl Default for TransferState {
    fn default() -> Self {
        Self::new(DEFAULT_GAMMA, WorkingSpace::default()).expect("default gamma is valid")
    }
}

/// Folds one target sample into the running statistics.
///
/// The first sample is assigned directly; afterwards each component moves to
/// `(1 - gamma) * running + gamma * sample`.
pub fn momentum_update(state: TransferState, sample: &ColorStats) -> TransferState {
    let mut next = state;
    if !state.initialized {
        next.running_mean = sample.mean;
        next.running_std = sample.std;
        next.initialized = true;
        return next;
    }
    let g = state.gamma;
    for c in 0..3 {
        next.running_mean[c] = (1.0 - g) * state.running_mean[c] + g * sample.mean[c];
        next.running_std[c] = (1.0 - g) * state.running_std[c] + g * sample.std[c];
    }
    next
}

/// The per-channel affine map shared by both views of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineTransfer {
    pub source_mean: [f64; 3],
    pub scale: [f64; 3],
    pub target_mean: [f64; 3],
}

impl AffineTransfer {
    pub fn new(source: &ColorStats, target: &ColorStats) -> Self {
        let scale = std::array::from_fn(|c| {
            if source.std[c] >= FLAT_CHANNEL_STD {
                target.std[c] / source.std[c]
            } else {
                1.0
            }
        });
        Self {
            source_mean: source.mean,
            scale,
            target_mean: target.mean,
        }
    }

    pub fn apply(&self, raster: &WorkingRaster) -> WorkingRaster {
        let n = raster.width * raster.height;
        let mut out = raster.clone();
        for c in 0..3 {
            for v in &mut out.data[c * n..(c + 1) * n] {
                *v = self.scale[c] * (*v - self.source_mean[c]) + self.target_mean[c];
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TransferredPair {
    pub left: Image,
    pub right: Image,
    /// Working-space rasters before conversion back to RGB (no clamping).
    pub left_working: WorkingRaster,
    pub right_working: WorkingRaster,
    pub coefficients: AffineTransfer,
}

/// Recolors a stereo pair toward the running target statistics.
///
/// Source statistics come from the left view and the same affine map is
/// applied to both views, so photometric correspondence between them survives.
pub fn transfer_pair(left: &Image, right: &Image, state: &TransferState) -> Result<TransferredPair> {
    if !state.initialized {
        return Err(Error::InvalidConfig(
            "transfer state has no target statistics yet".into(),
        ));
    }
    if !left.same_size(right) {
        return Err(Error::shape(left.dims(), right.dims()));
    }
    let left_src = rgb_to_working(left, state.space);
    let right_src = rgb_to_working(right, state.space);
    let coefficients = AffineTransfer::new(&channel_stats(&left_src), &state.target());
    let left_working = coefficients.apply(&left_src);
    let right_working = coefficients.apply(&right_src);
    Ok(TransferredPair {
        left: working_to_rgb(&left_working)?,
        right: working_to_rgb(&right_working)?,
        left_working,
        right_working,
        coefficients,
    })
}

/// Statistics of an RGB image in a working space.
pub fn image_stats(img: &Image, space: WorkingSpace) -> ColorStats {
    channel_stats(&rgb_to_working(img, space))
}

/// Stateful driver: one call per training iteration.
#[derive(Debug, Clone)]
pub struct ProgressiveTransfer {
    state: TransferState,
}

impl ProgressiveTransfer {
    pub fn new(state: TransferState) -> Self {
        Self { state }
    }

    pub fn state(&self) -> &TransferState {
        &self.state
    }

    /// Updates the running statistics with `target` and recolors the source pair.
    pub fn step(&mut self, left: &Image, right: &Image, target: &Image) -> Result<TransferredPair> {
        let sample = image_stats(target, self.state.space);
        self.state = momentum_update(self.state, &sample);
        transfer_pair(left, right, &self.state)
    }
}
